"""Long-range Ising ground states and nonlocal perimeters."""
