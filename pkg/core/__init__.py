# Spectral risk minimization: spectra, the exact inner solver, loss oracles and optimizers.
