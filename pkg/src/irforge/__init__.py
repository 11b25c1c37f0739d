"""irforge: hybrid infrared scene synthesis under image-quality constraints."""

from .errors import IRForgeError
from .imagecore import RegionStats, blit, dilation_ring, mask_ops, region_stats
from .layout import SceneLayout, build_layout
from .metrics import Calibration, MetricSet, measure_scene
from .pipeline import SceneRecipe, batch_generate, build_scene, preflight, replay_recipe
from .sensor import SensorModel, apply_mtf, apply_noise, quantize
from .solver import SceneConstraints, check_feasibility, place_occultant, solve_background, solve_target
from .thermal import Mode, ViewBundle, draw_state, expand_database, mix, sample_lambda, sample_lambdas

__version__ = "0.1.0"
