"""scikit-learn style wrappers around the tracking stages.

Every transformer consumes and returns an ``(n, 9)`` MOT table, so the
stages compose with :class:`sklearn.pipeline.Pipeline`::

    pipe = make_stitch_pipeline(read_config("run.toml"))
    tracks = pipe.fit_transform(detections, **metadata_params(pipe, records))

Hyper-parameters are stored verbatim by ``__init__`` and validated in
``fit``, following the scikit-learn conventions.
"""

from __future__ import annotations

from collections.abc import Mapping

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.pipeline import Pipeline
from sklearn.utils.validation import check_is_fitted

from .geometry import CameraIntrinsics, FrameMetadata, ReferenceOrigin, fov_grid, fov_objective, _first_min
from .metrics import evaluate
from .postprocess import interpolate_tracks, nms_tracks
from .pretrack import PretrackConfig, two_stage_track
from .reid import BOAT, SWIMMER, ReidConfig, compute_world_points, split_at_gaps, stitch
from .tracks import FRAME, ID, centers, check_tracks, sort_tracks, tracklets_from_array


def check_metadata(metadata) -> dict[int, FrameMetadata]:
    """Accept a sequence of :class:`FrameMetadata` or a frame -> record mapping."""
    if metadata is None:
        raise ValueError("drone metadata is required")
    if isinstance(metadata, Mapping):
        out = dict(metadata)
    else:
        out = {}
        for rec in metadata:
            if not isinstance(rec, FrameMetadata):
                raise TypeError(f"expected FrameMetadata records, got {type(rec).__name__}")
            if rec.frame_index in out:
                raise ValueError(f"duplicate metadata for frame {rec.frame_index}")
            out[rec.frame_index] = rec
    return out


def _per_class(value, default, cast):
    if value is None:
        return {SWIMMER: cast(default[SWIMMER]), BOAT: cast(default[BOAT])}, cast(default[SWIMMER])
    if isinstance(value, Mapping):
        table = {int(k): cast(v) for k, v in value.items() if k != "default"}
        return table, cast(value.get("default", min(table.values(), default=default[SWIMMER])))
    return {SWIMMER: cast(value), BOAT: cast(value)}, cast(value)


class TwoStageTracker(TransformerMixin, BaseEstimator):
    """Confidence-staged IoU tracker; see :func:`seastitch.pretrack.two_stage_track`."""

    def __init__(self, high_conf=0.5, low_conf=0.1, init_conf=0.2, buffer_frames=100, iou_gate=0.5):
        self.high_conf = high_conf
        self.low_conf = low_conf
        self.init_conf = init_conf
        self.buffer_frames = buffer_frames
        self.iou_gate = iou_gate

    def fit(self, X, y=None):
        check_tracks(X)
        self.config_ = PretrackConfig(self.high_conf, self.low_conf, self.init_conf,
                                      int(self.buffer_frames), self.iou_gate)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        return two_stage_track(X, self.config_)


class TrackInterpolator(TransformerMixin, BaseEstimator):
    def __init__(self, max_gap=30):
        self.max_gap = max_gap

    def fit(self, X, y=None):
        check_tracks(X)
        if self.max_gap < 0:
            raise ValueError("max_gap must be >= 0")
        return self

    def transform(self, X):
        return interpolate_tracks(X, int(self.max_gap))


class AreaNMS(TransformerMixin, BaseEstimator):
    """Per-frame suppression that keeps the larger of two overlapping boxes."""

    def __init__(self, iou_threshold=0.7):
        self.iou_threshold = iou_threshold

    def fit(self, X, y=None):
        check_tracks(X)
        if not 0 < self.iou_threshold <= 1:
            raise ValueError("iou_threshold must lie in (0, 1]")
        return self

    def transform(self, X):
        return nms_tracks(X, self.iou_threshold)


class MetadataGuidedStitcher(TransformerMixin, BaseEstimator):
    """Relink fragmented tracklets through their sea-plane positions.

    ``fit`` binds the drone metadata of one sequence; ``transform`` returns the
    same observations with new, dense track ids.  The merges of the last run
    are kept in ``report_``.

    Parameters
    ----------
    tau_match : float or mapping, default None
        Association gate in meters, one value or ``{class_id: meters}``.
        ``None`` means 10 m for swimmers and 30 m for boats.
    tau_memory : int or mapping, default None
        Frames an exited track stays matchable (default 300).
    expansion_rate : float, default 0.01
        Growth of the long-term gate per frame of absence.
    split_gap : int or None, default None
        Input tracklets are also cut at gaps longer than this before linking.
    """

    def __init__(self, fov=70.0, width=3840, height=2160, origin_latitude=47.6, origin_longitude=9.2,
                 tau_match=None, tau_memory=None, expansion_rate=0.01, velocity_window=10,
                 border_margin=50.0, split_gap=None, short_term=True, long_term=True):
        self.fov = fov
        self.width = width
        self.height = height
        self.origin_latitude = origin_latitude
        self.origin_longitude = origin_longitude
        self.tau_match = tau_match
        self.tau_memory = tau_memory
        self.expansion_rate = expansion_rate
        self.velocity_window = velocity_window
        self.border_margin = border_margin
        self.split_gap = split_gap
        self.short_term = short_term
        self.long_term = long_term

    def _validate_params(self):
        self.camera_ = CameraIntrinsics(float(self.fov), int(self.width), int(self.height))
        self.origin_ = ReferenceOrigin(float(self.origin_latitude), float(self.origin_longitude))
        tau_match, default_match = _per_class(self.tau_match, {SWIMMER: 10.0, BOAT: 30.0}, float)
        tau_memory, default_memory = _per_class(self.tau_memory, {SWIMMER: 300, BOAT: 300}, int)
        self.config_ = ReidConfig(tau_match=tau_match, tau_memory=tau_memory,
                                  default_tau_match=default_match, default_tau_memory=default_memory,
                                  expansion_rate=float(self.expansion_rate),
                                  velocity_window=int(self.velocity_window),
                                  border_margin=float(self.border_margin),
                                  split_gap=None if self.split_gap is None else int(self.split_gap))

    def fit(self, X, y=None, metadata=None):
        check_tracks(X)
        self._validate_params()
        self.metadata_ = check_metadata(metadata)
        return self

    def transform(self, X, metadata=None):
        check_is_fitted(self, "config_")
        arr = check_tracks(X, require_ids=True)
        md = self.metadata_ if metadata is None else check_metadata(metadata)
        tracklets = tracklets_from_array(arr)
        stitched, self.report_ = stitch(tracklets, md, self.config_, self.camera_, self.origin_,
                                        short_term=bool(self.short_term), long_term=bool(self.long_term))
        out = arr.copy()
        for t in stitched:
            out[t.rows, ID] = t.id
        return sort_tracks(out)

    def score(self, X, y, metadata=None):
        """IDF1 of the stitched ``X`` against ground truth ``y``."""
        return evaluate(y, self.transform(X, metadata)).idf1


class GapSplitter(MetadataGuidedStitcher):
    """Give new ids to the pieces of tracklets that a frame-to-frame tracker resumed on stale boxes.

    Runs before gap interpolation so that a suspicious gap is not filled in.
    Shares the geometry and gate parameters of the stitcher; see
    :func:`seastitch.reid.split_at_gaps`.
    """

    def transform(self, X, metadata=None):
        check_is_fitted(self, "config_")
        arr = check_tracks(X, require_ids=True)
        md = self.metadata_ if metadata is None else check_metadata(metadata)
        tracklets = tracklets_from_array(arr)
        compute_world_points(tracklets, md, self.camera_, self.origin_)
        out = arr.copy()
        for t in split_at_gaps(tracklets, self.config_.split_gap, self.config_.match_gate):
            out[t.rows, ID] = t.id
        return sort_tracks(out)

    def score(self, X, y, metadata=None):
        raise NotImplementedError


class FovCalibrator(BaseEstimator):
    """Grid search for the field of view from tracks of stationary targets.

    Every id in the table passed to ``fit`` is one segment: a target that does
    not move while the camera does.  The chosen fov minimizes the mean spread
    of the projected positions; ties prefer the smaller fov.
    """

    def __init__(self, lo=30.0, hi=120.0, step=0.5, width=3840, height=2160,
                 origin_latitude=47.6, origin_longitude=9.2):
        self.lo = lo
        self.hi = hi
        self.step = step
        self.width = width
        self.height = height
        self.origin_latitude = origin_latitude
        self.origin_longitude = origin_longitude

    def fit(self, X, y=None, metadata=None):
        arr = check_tracks(X, require_ids=True)
        md = check_metadata(metadata)
        origin = ReferenceOrigin(float(self.origin_latitude), float(self.origin_longitude))
        cam = CameraIntrinsics(70.0, int(self.width), int(self.height))
        segments = []
        for t in tracklets_from_array(arr):
            rows = arr[t.rows]
            segments.append((centers(rows), [md[int(f)] for f in rows[:, FRAME]]))
        grid = fov_grid(self.lo, self.hi, self.step)
        self.grid_ = grid[(grid > 0) & (grid < 180)]
        self.objective_ = fov_objective(segments, cam, self.grid_, origin)
        self.fov_ = float(self.grid_[_first_min(self.objective_)])
        return self


def _stitch_params(cfg, **overrides) -> dict:
    r = cfg.reid
    table = lambda d, default: {**{str(k): v for k, v in d.items()}, "default": default}  # noqa: E731
    params = dict(
        fov=cfg.camera.fov, width=cfg.camera.width, height=cfg.camera.height,
        origin_latitude=cfg.origin.latitude, origin_longitude=cfg.origin.longitude,
        tau_match=table(r.tau_match, r.default_tau_match),
        tau_memory=table(r.tau_memory, r.default_tau_memory),
        expansion_rate=r.expansion_rate, velocity_window=r.velocity_window,
        border_margin=r.border_margin, split_gap=r.split_gap,
        short_term=cfg.short_term, long_term=cfg.long_term)
    params.update(overrides)
    return params


def make_stitch_pipeline(cfg=None, pretrack: bool = False, interpolate: bool = True) -> Pipeline:
    """Pipeline of the offline stages configured from a :class:`~seastitch.io.PipelineConfig`.

    Order: optional pretrack, gap splitting, interpolation, NMS, stitching,
    interpolation.  Disabled stages are ``"passthrough"``.  The steps that
    need drone metadata get it through :func:`metadata_params`.
    """
    from .io import PipelineConfig

    cfg = cfg or PipelineConfig()
    p, post = cfg.pretrack, cfg.post
    relink = cfg.short_term or cfg.long_term
    steps = [
        ("pretrack", TwoStageTracker(p.high_conf, p.low_conf, p.init_conf, p.buffer_frames, p.iou_gate)
         if pretrack else "passthrough"),
        ("split", GapSplitter(**_stitch_params(cfg)) if relink else "passthrough"),
        ("interp_pre", TrackInterpolator(post.max_gap) if interpolate and post.pre_reid else "passthrough"),
        ("nms", AreaNMS(post.nms_iou) if cfg.nms else "passthrough"),
        ("stitch", MetadataGuidedStitcher(**_stitch_params(cfg))),
        ("interp_post", TrackInterpolator(post.max_gap) if interpolate and post.post_reid else "passthrough"),
    ]
    return Pipeline(steps)


def metadata_params(pipeline: Pipeline, metadata) -> dict:
    """``fit_transform`` keyword arguments handing ``metadata`` to every step that uses it."""
    return {f"{name}__metadata": metadata for name, step in pipeline.steps
            if isinstance(step, MetadataGuidedStitcher)}


__all__ = ["AreaNMS", "FovCalibrator", "GapSplitter", "MetadataGuidedStitcher", "TrackInterpolator", "TwoStageTracker",
           "check_metadata", "make_stitch_pipeline", "metadata_params"]
