"""CPU-native sparse voxel radiance fields with Q-learning frame pacing."""

from .errors import (CorruptModel, DatasetNotFound, DimensionMismatch,
                     EmptyLibrary, EmptyTelemetry, ImageTooSmall,
                     InconsistentDataset, IncompleteTelemetry, InvalidArgument,
                     InvalidPose, InvalidSettings, NonFiniteGradient,
                     ResolutionLimit, SingularSystem, VistaflowError)
from .metrics import FpsStats, QualityReport, fps_stats, psnr, ssim
from .pacing import LoadCurve, PacedRun, run_paced
from .profiles import (BenchmarkProfile, ProfileEntry, TelemetryRecord,
                       extract_profile, knn_match, load_profile,
                       load_profile_library, save_profile)
from .quiq import (DEFAULT_TIERS, ControlInput, QTable, RidgeModel, SimEnv,
                   TierTable, control_step, fit_ridge, load_qtable,
                   predict_frame_time, q_update, reward, run_benchmark,
                   save_qtable, train_quiq)
from .scene_io import (CameraIntrinsics, CameraPose, Dataset, ImageBuffer,
                       OrbitTrajectory, Ray, RayBatch, generate_rays,
                       load_dataset, look_at_pose, make_procedural_dataset,
                       make_procedural_scene, read_png, write_png)
from .trainer import (TrainConfig, TrainReport, sample_ray_batch, sgd_step,
                      train, tv_term)
from .volume_renderer import (FrameStats, RenderSettings, march_ray,
                              march_ray_with_grads, ray_aabb, render_image)
from .voxel_model import (PlenOctree, PruneStats, SampledPoint, VoxelGrid,
                          compute_prune_stats, eval_sh, load_model, prune,
                          save_model, subdivide, to_octree, trilinear_sample)

__version__ = "0.1.0"
