"""Run configuration and the versioned JSON model file."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .channels import ChannelConfig
from .dataset import FcidError
from .fisher import FisherConfig
from .gmm import DEFAULT_COMPONENTS, DEFAULT_MAX_SAMPLES, FEATURE_SCALE, EmConfig, GmmModel
from .histograms import CHANNELS, ClassDistributions, DistinctiveBins, HistConfig, Histogram
from .svm import SvmConfig, SvmModel

FORMAT_VERSION = "fcid-model/1"
METHODS = ("hist", "fe")

# tuned cost / gamma / threshold per method
HIST_SVM = SvmConfig(c=32.0, g=0.5, threshold=0.455)
FE_SVM = SvmConfig(c=2.0, g=0.5, threshold=0.492)


class ModelFormatError(FcidError):
    def __init__(self, message: str):
        super().__init__(message, stage="model-file")


@dataclass(frozen=True)
class FcidConfig:
    method: str = "hist"
    seed: int = 0
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    hist: HistConfig = field(default_factory=HistConfig)
    n_components: int = DEFAULT_COMPONENTS
    max_samples_per_image: int | None = DEFAULT_MAX_SAMPLES
    em: EmConfig = field(default_factory=EmConfig)
    fisher: FisherConfig = field(default_factory=FisherConfig)
    svm: SvmConfig = field(default_factory=lambda: HIST_SVM)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hist"]["bins"] = list(self.hist.bins)
        return d


def default_config(method: str = "hist", seed: int = 0) -> FcidConfig:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    return FcidConfig(method=method, seed=seed, svm=HIST_SVM if method == "hist" else FE_SVM,
                      em=EmConfig(seed=seed))


def config_from_dict(data: dict, method: str | None = None, seed: int | None = None) -> FcidConfig:
    """Overlay a (possibly partial) nested dict on the method defaults."""
    data = dict(data or {})
    method = method or data.get("method", "hist")
    seed = data.get("seed", 0) if seed is None else seed
    base = default_config(method, seed)
    hist = dict(data.get("hist", {}))
    if isinstance(hist.get("bins"), int):
        hist["bins"] = (hist["bins"],) * 4
    gmm = dict(data.get("gmm", {}))
    em_keys = {"max_iter", "tol", "var_floor", "kmeans_iter"}
    em = replace(base.em, **{k: v for k, v in gmm.items() if k in em_keys})
    unknown = set(gmm) - em_keys - {"n_components", "max_samples_per_image"}
    if unknown:
        raise ValueError(f"unknown gmm config keys: {sorted(unknown)}")
    return replace(
        base,
        channel=replace(base.channel, **data.get("channel", {})),
        hist=replace(base.hist, **hist),
        n_components=int(gmm.get("n_components", base.n_components)),
        max_samples_per_image=gmm.get("max_samples_per_image", base.max_samples_per_image),
        em=em,
        fisher=replace(base.fisher, **data.get("fisher", {})),
        svm=replace(base.svm, **data.get("svm", {})),
    )


def load_config(path, method: str | None = None, seed: int | None = None) -> FcidConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh), method, seed)


@dataclass
class FcidModel:
    method: str
    config: FcidConfig
    svm: SvmModel
    distributions: ClassDistributions | None = None
    upsilon: DistinctiveBins | None = None
    gmm: GmmModel | None = None
    provenance: dict = field(default_factory=dict)
    version: str = FORMAT_VERSION

    @property
    def bins(self) -> tuple[int, ...]:
        return self.config.hist.bins

    @property
    def threshold(self) -> float:
        return self.svm.threshold


def _floats(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def _hist_dict(h: Histogram) -> dict:
    return {"lo": h.lo, "hi": h.hi, "bins": _floats(h.bins)}


def model_to_dict(model: FcidModel) -> dict:
    s = model.svm
    out = {
        "version": model.version,
        "method": model.method,
        "config": model.config.to_dict(),
        "svm": {
            "c": s.c,
            "gamma": s.gamma,
            "bias": s.bias,
            "threshold": s.threshold,
            "platt": {"a": s.platt_a, "b": s.platt_b},
            "scale_min": _floats(s.scale_min),
            "scale_range": _floats(s.scale_range),
            "dual_coef": _floats(s.dual_coef),
            "support_vectors": _floats(s.support_vectors),
        },
        "provenance": model.provenance,
    }
    if model.method == "hist":
        out["hist"] = {
            "bins": list(model.bins),
            "upsilon": dict(zip(CHANNELS, model.upsilon.as_tuple())),
            "natural": {ch: _hist_dict(model.distributions.natural[ch]) for ch in CHANNELS},
            "fake": {ch: _hist_dict(model.distributions.fake[ch]) for ch in CHANNELS},
        }
    else:
        g = model.gmm
        out["gmm"] = {
            "n_components": g.n_components,
            "feature_scale": list(FEATURE_SCALE),
            "weights": _floats(g.weights),
            "means": _floats(g.means),
            "variances": _floats(g.variances),
        }
    return out


def _config_from_saved(d: dict) -> FcidConfig:
    return FcidConfig(
        method=d["method"],
        seed=d["seed"],
        channel=ChannelConfig(**d["channel"]),
        hist=HistConfig(bins=tuple(d["hist"]["bins"]), pooling=d["hist"]["pooling"]),
        n_components=d["n_components"],
        max_samples_per_image=d["max_samples_per_image"],
        em=EmConfig(**d["em"]),
        fisher=FisherConfig(**d["fisher"]),
        svm=SvmConfig(**d["svm"]),
    )


def model_from_dict(d: dict) -> FcidModel:
    version = d.get("version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {version!r} (expected {FORMAT_VERSION!r})")
    try:
        method = d["method"]
        if method not in METHODS:
            raise ModelFormatError(f"unknown method tag {method!r}")
        s = d["svm"]
        n_feat = len(s["scale_min"])
        svm = SvmModel(
            support_vectors=np.array(s["support_vectors"], dtype=np.float64).reshape(-1, n_feat),
            dual_coef=np.array(s["dual_coef"], dtype=np.float64),
            bias=float(s["bias"]),
            gamma=float(s["gamma"]),
            scale_min=np.array(s["scale_min"], dtype=np.float64),
            scale_range=np.array(s["scale_range"], dtype=np.float64),
            platt_a=float(s["platt"]["a"]),
            platt_b=float(s["platt"]["b"]),
            threshold=float(s["threshold"]),
            c=float(s["c"]),
        )
        model = FcidModel(method=method, config=_config_from_saved(d["config"]), svm=svm,
                          provenance=d.get("provenance", {}), version=version)
        if method == "hist":
            h = d["hist"]

            def hists(part):
                return {ch: Histogram(np.array(part[ch]["bins"], dtype=np.float64), ch,
                                      float(part[ch]["lo"]), float(part[ch]["hi"])) for ch in CHANNELS}

            model.distributions = ClassDistributions(hists(h["natural"]), hists(h["fake"]))
            model.upsilon = DistinctiveBins(*(int(h["upsilon"][ch]) for ch in CHANNELS))
        else:
            g = d["gmm"]
            if tuple(g.get("feature_scale", FEATURE_SCALE)) != FEATURE_SCALE:
                raise ModelFormatError(f"unsupported feature scaling {g['feature_scale']!r}")
            model.gmm = GmmModel(np.array(g["weights"], dtype=np.float64),
                                 np.array(g["means"], dtype=np.float64),
                                 np.array(g["variances"], dtype=np.float64))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc!r}") from exc
    return model


def save_model(model: FcidModel, path):
    """Write the model as JSON; floats use shortest round-trip repr."""
    text = json.dumps(model_to_dict(model), indent=1, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n")


def load_model(path) -> FcidModel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"cannot parse model file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelFormatError(f"cannot parse model file {path}: top level is not an object")
    return model_from_dict(data)
