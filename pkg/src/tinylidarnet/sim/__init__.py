from .episode import EpisodeLog, ProgressTracker, ScanNoise, progress, run_episode, start_pose
from .raycast import march, raycast
from .track import BUNDLED_TRACKS, TrackBundle, get_track, load_track, save_track
from .vehicle import DT, WHEELBASE, VehicleState, in_collision, step

__all__ = [
    "BUNDLED_TRACKS", "DT", "EpisodeLog", "ProgressTracker", "ScanNoise", "TrackBundle",
    "VehicleState", "WHEELBASE", "get_track", "in_collision", "load_track", "march",
    "progress", "raycast", "run_episode", "save_track", "start_pose", "step",
]
