import json

import numpy as np

from .network import MlpModel, NetworkSpec

FORMAT_VERSION = 1


def save_checkpoint(path, model: MlpModel, seed=None, selected_epoch=None, extra=None):
    """Write spec, float64 parameters and training metadata to an ``.npz`` container."""
    meta = {
        "format_version": FORMAT_VERSION,
        "spec": model.spec.to_dict(),
        "seed": seed,
        "selected_epoch": selected_epoch,
        "extra": extra or {},
    }
    arrays = {f"p{i}": np.asarray(p, dtype=np.float64) for i, p in enumerate(model.parameters())}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(model, meta)`` with the model in eval mode."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {meta.get('format_version')!r}")
        spec = NetworkSpec.from_dict(meta["spec"])
        n_layers = len(spec.layer_sizes) - 1
        params = [data[f"p{i}"] for i in range(2 * n_layers)]
    model = MlpModel(spec, params[0::2], params[1::2])
    return model, meta
