import os

# It is recommended not to change the following default paths. If necessary, main_path may be changed.
main_path: str = os.path.dirname(__file__)
export_path: str = os.path.join(main_path, 'export')
log_file: str = os.path.join(main_path, 'log.txt')

# Set debug_mode to True to receive detailed debug information in log.txt. WARNING: This disables multiprocessing.
debug_mode: bool = False

# Show tqdm progress bars on stderr. Progress output never reaches the report files.
show_progress: bool = True

# Seed used by every subcommand unless --seed is given. Identical seed and config give byte-identical reports.
default_seed: int = 20240521

# Number of worker processes for Monte Carlo chunks and certification rows. 1 keeps everything in-process.
workers: int = max(1, (os.cpu_count() or 1))

# Number of samples per random chunk. Streams are keyed by chunk index, so changing this changes the estimates.
chunk_size: int = 2 ** 16

# Absolute tolerance for values up to 1, relative above, used by convexity and symmetry checks.
convexity_tolerance: float = 1e-9

# Tolerance of the sweep/conjugate cross-check of the infimum convolution.
cross_check_tolerance: float = 1e-7

# A certificate passes when its worst margin is at least -certificate_tolerance.
certificate_tolerance: float = 1e-7

# Checks on [-1, 1] (cumulant bounds, quadratic bound) use a tighter tolerance.
lemma_tolerance: float = 1e-8

# Number of points of the symmetric pair grids used by the condition certificates.
grid_points: int = 2001

# Half-width of the x-space grid of the transport condition. None uses the quantile ceiling below times 1.5.
grid_span: float | None = 40.0

# Quantile ceiling 1 - 10^-12 expressed through the tail exponent: all grids cover levels up to -ln(2e-12).
quantile_ceiling: float = 1e-12

# Regularization parameter of the linear and quadratic tail regularizations.
epsilon: float = 1e-3

# Values of epsilon for the optional sensitivity report of certify.
epsilon_sensitivity: tuple[float, ...] = (1e-2, 1e-3, 1e-4)

# Points per side of the cumulant grid (linear part); a geometric refinement of the same size is added.
cumulant_grid_points: int = 1001

# Largest |s| tried while searching the span of the cumulant grid.
cumulant_span_cap: float = 1e6

# Relative accuracy of every tail integral.
quadrature_rtol: float = 1e-10

# Largest truncation point tried by the tail integrals before giving up.
quadrature_truncation_cap: float = 1e15

# Log-density drop below the peak at which tail integrals are truncated.
quadrature_log_drop: float = 60.0

# Number of p-values of the geometric grid used by the regularity and K-tilde measurements.
moment_grid_size: int = 64

# Monte Carlo defaults: samples per block, z-value of the confidence intervals, precision target and escalation cap.
n_samples: int = 10 ** 6
confidence_z: float = 1.96
relative_precision: float = 0.05
max_escalation: int = 16

# Random restarts of the dual-ball ascent for l1/l2 weak moments.
ascent_restarts: int = 64
ascent_iterations: int = 200

# Threshold of the contradiction scan (LHS'/RHS' >= threshold for all m >= m*).
contradiction_threshold: float = 1.5

# The scan uses theta = scan_theta_factor / m (rounded through an integer number of copies while e^{2^m} is finite).
scan_theta_factor: float = 0.25

# Plateau offsets used by the violation search for the hinge test functions.
violation_deltas: tuple[float, ...] = (1e-3, 1e-6)

# Largest dyadic exponent k stored by the example law (atoms at 2^k).
dyadic_max_exponent: int = 60
