"""bohmlab: pilot-wave dynamics and the measurement formalism built on it.

Subpackages
-----------
hilbert      dense complex linear algebra (tensor products, spectra)
formalism    PVM/POVM measurement calculus, density matrices, instruments
wavefield    grid wave functions, split-step evolution, analytic states
bohm         guiding equation, trajectories, quantum-equilibrium ensembles
experiments  canonical scenarios (Stern-Gerlach, EPRB, time of flight, ...)
nogo         Bell, Hardy, noncontextual value maps, measurability tests
cli          seeded command-line runner writing CSV/JSON reports and figures
"""

__version__ = "0.1.0"
