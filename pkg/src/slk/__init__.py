"""Non-neural machinery for bin-classification monocular 3D box prediction on KITTI."""

from .bin_codec import BinKind, BinSchedule, DofSchedules, bin_index, decode, decode_angle_circular, encode_one_hot
from .camera import CameraIntrinsics, alpha_to_ry, project, ry_to_alpha, solve_xy_from_camera_offset, solve_xy_from_image_offset
from .evaluation import Difficulty, EvalReport, Interp, average_precision, evaluate, match_frame, sweep_iou
from .geometry import Box3D, bev_polygon, corners, iou_3d, polygon_intersection
from .kitti_io import Detection, GroundTruthObject, parse_calib_file, parse_label_file, parse_prediction_file, serialize
from .translation import solve_translation

__version__ = "0.1.0"
