"""Spread voxel pooling for BEV feature maps.

Library surface: BEV lattice geometry, the weight-function family, the
spread pooling forward/backward kernels in serial-reference, parallel-fast,
and parallel-deterministic modes, a position-recovery verification lab, and
the dataset/report file formats behind the ``spreadpool`` CLI.
"""

from .errors import (ConfigError, DatasetIOError, DegenerateGeometryError,
                     DomainError, NumericError, SpreadPoolError)
from .geometry import (BevGridSpec, CameraModel, bev_project, grid_center,
                       locate_cell, locate_cells, project_pixel_to_3d)
from .pool import (BevFeatureMap, ExecMode, FrustumBatch, NeighborSet,
                   PoolGradients, SavedForBackward, baseline_pool,
                   pool_reference, select_neighbors, select_neighbors_batch,
                   snap_cells, spread_pool_backward, spread_pool_forward)
from .recovery import (RecoveryCase, RecoveryReport, RecoveryRow,
                       quantization_error_mc, recover_position,
                       recover_position_with_sigma2, run_recovery_experiment)
from .scene import (SyntheticScene, gen_scene, read_gradients, read_map,
                    read_scene, scene_file_size, write_gradients, write_map,
                    write_scene)
from .weights import (WeightGrad, WeightKind, WeightParams, sigma_sq,
                      sigma_sq_array, weight, weight_grad)

__version__ = "0.1.0"


def version() -> str:
    return __version__
