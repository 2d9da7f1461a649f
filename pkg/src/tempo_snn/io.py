"""Model and dataset files.

Model file
    One UTF-8 JSON document::

        {"format": "tempo-snn-model", "version": 1,
         "meta": {...},
         "layers": [{"W": [[...]], "V": null | [[...]],
                     "norm": null | {"mu", "var", "eps", "gain", "bias"},
                     "neurons": {"form": "adlif", "alpha", "beta", "a", "b", "theta"}
                              | {"form": "general", "Hv", "Hf", "Hi", "Hr", "theta"}}],
         "readout": {"W": [[...]], "b": [...]}}

    Floats are written with Python's shortest round-trip representation, so
    loading gives back the identical doubles.

Dataset directory
    ``manifest.json`` holds ``channels``, ``dt`` (ms), a ``labels`` map from
    label name to class index and the ordered ``samples`` list of
    ``{"id", "label"}``.  Each sample is ``samples/<id>.csv`` with header
    ``c0,c1,...`` and one row of integer counts per timestep.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from tempo_snn.errors import DataError
from tempo_snn.network import AdLifBank, GeneralBank, NetworkModel, SpikingLayer
from tempo_snn.normstats import NormStats
from tempo_snn.resample import SpikeTensor

MODEL_FORMAT = "tempo-snn-model"
DATASET_FORMAT = "tempo-snn-dataset"
FORMAT_VERSION = 1


def dumps_json(obj) -> str:
    """Canonical JSON text used for every file this package writes."""
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _load_json(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not UTF-8 text ({exc})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


# --------------------------------------------------------------------------
# models


def model_to_dict(m: NetworkModel) -> dict:
    layers = []
    for ly in m.layers:
        nb = ly.neurons
        if nb.form == "adlif":
            neurons = {"form": "adlif", **{k: getattr(nb, k).tolist() for k in ("alpha", "beta", "a", "b", "theta")}}
        else:
            neurons = {"form": "general", **{k: getattr(nb, k).tolist() for k in ("Hv", "Hf", "Hi", "Hr", "theta")}}
        norm = None
        if ly.norm is not None:
            n = ly.norm
            norm = {"mu": n.mu.tolist(), "var": n.var.tolist(), "eps": n.eps, "gain": n.gain.tolist(), "bias": n.bias.tolist()}
        layers.append(
            {"W": ly.W.tolist(), "V": None if ly.V is None else ly.V.tolist(), "norm": norm, "neurons": neurons}
        )
    return {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "meta": dict(m.meta),
        "layers": layers,
        "readout": {"W": m.readout_W.tolist(), "b": m.readout_b.tolist()},
    }


class _Fields:
    """Field access that reports the JSON path of whatever is wrong."""

    def __init__(self, source: str):
        self.source = source

    def fail(self, where: str, msg: str):
        raise DataError(f"{self.source}: {where}: {msg}")

    def get(self, obj, key, where):
        if not isinstance(obj, dict):
            self.fail(where, "expected an object")
        if key not in obj:
            self.fail(where, f"missing field {key!r}")
        return obj[key]

    def array(self, value, where, ndim):
        try:
            arr = np.array(value, dtype=np.float64)
        except (TypeError, ValueError):
            self.fail(where, "expected numbers")
        if arr.ndim != ndim:
            self.fail(where, f"expected a {ndim}-d array, got {arr.ndim}-d")
        return arr


def model_from_dict(d, source: str = "<model>") -> NetworkModel:
    f = _Fields(source)
    if f.get(d, "format", "top level") != MODEL_FORMAT:
        f.fail("format", f"expected {MODEL_FORMAT!r}")
    version = f.get(d, "version", "top level")
    if version != FORMAT_VERSION:
        f.fail("version", f"unsupported format version {version!r}")
    meta = f.get(d, "meta", "top level")
    if not isinstance(meta, dict):
        f.fail("meta", "expected an object")
    raw_layers = f.get(d, "layers", "top level")
    if not isinstance(raw_layers, list):
        f.fail("layers", "expected a list")
    layers = []
    for i, raw in enumerate(raw_layers):
        at = f"layers[{i}]"
        W = f.array(f.get(raw, "W", at), f"{at}.W", 2)
        rawV = f.get(raw, "V", at)
        V = None if rawV is None else f.array(rawV, f"{at}.V", 2)
        rn = f.get(raw, "norm", at)
        norm = None
        if rn is not None:
            na = f"{at}.norm"
            try:
                norm = NormStats(
                    *(f.array(f.get(rn, k, na), f"{na}.{k}", 1) for k in ("mu", "var")),
                    float(f.get(rn, "eps", na)),
                    *(f.array(f.get(rn, k, na), f"{na}.{k}", 1) for k in ("gain", "bias")),
                )
            except ValueError as exc:
                f.fail(na, str(exc))
        rnr = f.get(raw, "neurons", at)
        na = f"{at}.neurons"
        form = f.get(rnr, "form", na)
        try:
            if form == "adlif":
                bank = AdLifBank(*(f.array(f.get(rnr, k, na), f"{na}.{k}", 1) for k in ("alpha", "beta", "a", "b", "theta")))
            elif form == "general":
                bank = GeneralBank(
                    f.array(f.get(rnr, "Hv", na), f"{na}.Hv", 3),
                    *(f.array(f.get(rnr, k, na), f"{na}.{k}", 2) for k in ("Hf", "Hi", "Hr")),
                    f.array(f.get(rnr, "theta", na), f"{na}.theta", 1),
                )
            else:
                f.fail(f"{na}.form", f"unknown neuron form {form!r}")
            layers.append(SpikingLayer(W, bank, V, norm))
        except DataError as exc:
            if str(exc).startswith(source):
                raise
            f.fail(at, str(exc))
    ro = f.get(d, "readout", "top level")
    try:
        return NetworkModel(
            layers,
            f.array(f.get(ro, "W", "readout"), "readout.W", 2),
            f.array(f.get(ro, "b", "readout"), "readout.b", 1),
            meta,
        )
    except DataError as exc:
        if str(exc).startswith(source):
            raise
        f.fail("model", str(exc))


def save_model(m: NetworkModel, path) -> None:
    Path(path).write_text(dumps_json(model_to_dict(m)), encoding="utf-8")


def load_model(path) -> NetworkModel:
    p = Path(path)
    return model_from_dict(_load_json(p), str(p))


# --------------------------------------------------------------------------
# datasets


def write_dataset(dataset, path, label_names=None) -> None:
    """Write ``[(SpikeTensor, label), ...]`` as a dataset directory.

    ``label_names`` maps class indices to names (default: the index as text).
    """
    items = list(dataset)
    root = Path(path)
    (root / "samples").mkdir(parents=True, exist_ok=True)
    channels = items[0][0].channels if items else 0
    dts = {x.dt for x, _ in items}
    if len(dts) > 1:
        raise DataError(f"samples have differing dt {sorted(dts)}")
    dt = dts.pop() if dts else 1.0
    labels = sorted({int(y) for _, y in items})
    names = {y: (str(y) if label_names is None else str(label_names[y])) for y in labels}
    width = max(5, len(str(len(items))))
    entries = []
    for k, (x, y) in enumerate(items):
        if x.channels != channels:
            raise DataError(f"sample {k} has {x.channels} channels, expected {channels}")
        sid = f"s{k:0{width}d}"
        with open(root / "samples" / f"{sid}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"c{c}" for c in range(channels)])
            w.writerows(x.counts.T.tolist())
        entries.append({"id": sid, "label": names[int(y)]})
    manifest = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "channels": channels,
        "dt": dt,
        "labels": {names[y]: y for y in labels},
        "samples": entries,
    }
    (root / "manifest.json").write_text(dumps_json(manifest), encoding="utf-8")


def _read_sample(path: Path, channels: int, dt: float) -> SpikeTensor:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"{path}: missing sample file") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = [f"c{c}" for c in range(channels)]
        if header != expected:
            raise DataError(f"{path}: header {header} does not match {channels} channels")
        rows = []
        for line, row in enumerate(reader, start=2):
            if len(row) != channels:
                raise DataError(f"{path}:{line}: expected {channels} values, got {len(row)}")
            vals = []
            for name, cell in zip(expected, row):
                try:
                    v = int(cell)
                except ValueError:
                    raise DataError(f"{path}:{line}: column {name}: non-integer count {cell!r}") from None
                if v < 0:
                    raise DataError(f"{path}:{line}: column {name}: negative count {v}")
                vals.append(v)
            rows.append(vals)
    counts = np.array(rows, dtype=np.int64).reshape(-1, channels).T
    return SpikeTensor(counts, dt)


def read_dataset(path):
    root = Path(path)
    f = _Fields(str(root / "manifest.json"))
    man = _load_json(root / "manifest.json")
    if f.get(man, "format", "top level") != DATASET_FORMAT:
        f.fail("format", f"expected {DATASET_FORMAT!r}")
    if f.get(man, "version", "top level") != FORMAT_VERSION:
        f.fail("version", "unsupported format version")
    channels = f.get(man, "channels", "top level")
    dt = f.get(man, "dt", "top level")
    labels = f.get(man, "labels", "top level")
    samples = f.get(man, "samples", "top level")
    if not isinstance(channels, int) or channels < 0:
        f.fail("channels", "expected a nonnegative integer")
    if not isinstance(dt, (int, float)) or not dt > 0:
        f.fail("dt", "expected a positive number")
    if not isinstance(labels, dict) or not isinstance(samples, list):
        f.fail("labels/samples", "expected an object and a list")
    out = []
    for k, entry in enumerate(samples):
        sid = f.get(entry, "id", f"samples[{k}]")
        name = f.get(entry, "label", f"samples[{k}]")
        if name not in labels:
            f.fail(f"samples[{k}].label", f"label {name!r} not in the label map")
        out.append((_read_sample(root / "samples" / f"{sid}.csv", channels, float(dt)), int(labels[name])))
    return out
