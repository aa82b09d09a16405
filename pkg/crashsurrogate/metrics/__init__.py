from crashsurrogate.metrics.distributions import ks_statistic, wasserstein1
from crashsurrogate.metrics.splits import SplitReport, make_split, load_split
from crashsurrogate.metrics.errors import EvalReport, rmse_series, evaluate
from crashsurrogate.metrics.survival import survival_space, survival_distance
