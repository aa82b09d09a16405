"""Ground truth: design space, Latin hypercube sampling and the lattice oracle"""
