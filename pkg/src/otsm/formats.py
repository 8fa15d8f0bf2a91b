"""On-disk formats: .otr rasters, columnar cloud text, polygon CSV, and the
OTSM binary model container.  docs/format.md is the normative description.

All binary payloads are little-endian; all text is UTF-8.  Serialization is
deterministic: identical objects produce byte-identical files (dict keys are
sorted, floats are written with full round-trip precision).
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .errors import OtsmError
from .grids import FieldSample, Grid
from .matching import MatchedEnsemble
from .regression import PodBasis, PolyRegressor
from .splat import ParticleCloud

CONTAINER_MAGIC = b"OTSM"
CONTAINER_VERSION = 1


class FormatError(OtsmError):
    """File does not conform to a documented format."""


# ---------------------------------------------------------------------------
# .otr raster format: text header, binary float64 payload

def write_raster(path, sample: FieldSample) -> None:
    grid = sample.grid
    has_mask = 0 if grid.mask.all() else 1
    integral = "none" if sample.integral_I is None else repr(float(sample.integral_I))
    header = (
        f"OTR1\n"
        f"nx {grid.nx}\n"
        f"ny {grid.ny}\n"
        f"origin {float(grid.origin[0])!r} {float(grid.origin[1])!r}\n"
        f"spacing {float(grid.spacing[0])!r} {float(grid.spacing[1])!r}\n"
        f"integral {integral}\n"
        f"mask {has_mask}\n"
        f"end\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode())
        fh.write(np.ascontiguousarray(sample.values, dtype="<f8").tobytes())
        if has_mask:
            fh.write(np.packbits(grid.mask.ravel()).tobytes())


def read_raster(path) -> FieldSample:
    with open(path, "rb") as fh:
        blob = fh.read()
    head_end = blob.find(b"end\n")
    if not blob.startswith(b"OTR1\n") or head_end < 0:
        raise FormatError(f"{path} is not an OTR1 raster")
    fields = {}
    for line in blob[5:head_end].decode().splitlines():
        key, _, rest = line.partition(" ")
        fields[key] = rest.split()
    nx, ny = int(fields["nx"][0]), int(fields["ny"][0])
    origin = np.array([float(v) for v in fields["origin"]])
    spacing = np.array([float(v) for v in fields["spacing"]])
    payload = blob[head_end + 4:]
    n_values = nx * ny * 8
    if len(payload) < n_values:
        raise FormatError(f"{path}: payload truncated "
                          f"({len(payload)} of {n_values} bytes)")
    values = np.frombuffer(payload[:n_values], dtype="<f8").reshape(ny, nx).copy()
    mask = None
    if fields["mask"][0] == "1":
        packed = np.frombuffer(payload[n_values:], dtype=np.uint8)
        if len(packed) * 8 < nx * ny:
            raise FormatError(f"{path}: mask payload truncated")
        mask = np.unpackbits(packed, count=nx * ny).astype(bool).reshape(ny, nx)
    integral = None if fields["integral"][0] == "none" else float(fields["integral"][0])
    grid = Grid(origin=origin, spacing=spacing, nx=nx, ny=ny, mask=mask)
    return FieldSample(grid=grid, values=values, integral_I=integral)


# ---------------------------------------------------------------------------
# particle-cloud columnar text

def write_cloud(path, cloud: ParticleCloud) -> None:
    lines = [f"n {cloud.n_particles}", f"sigma {float(cloud.sigma)!r}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in cloud.centers]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_cloud(path) -> ParticleCloud:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if len(lines) < 3 or not lines[0].startswith("n ") or not lines[1].startswith("sigma "):
        raise FormatError(f"{path} is not a cloud file")
    n = int(lines[0].split()[1])
    sigma = float(lines[1].split()[1])
    centers = np.array([[float(v) for v in ln.split()] for ln in lines[2:]])
    if len(centers) != n:
        raise FormatError(f"cloud header says {n} rows, found {len(centers)}")
    return ParticleCloud(centers=centers, sigma=sigma)


# ---------------------------------------------------------------------------
# polygon CSV

def write_polygon_csv(path, poly: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y\n")
        for x, y in np.asarray(poly, dtype=float):
            fh.write(f"{float(x)!r},{float(y)!r}\n")


def read_polygon_csv(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line or (i == 0 and line.lower() == "x,y"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FormatError(f"{path}:{i + 1}: expected 'x,y'")
            rows.append([float(parts[0]), float(parts[1])])
    return np.asarray(rows)


# ---------------------------------------------------------------------------
# binary array packing shared by container sections

def _pack_arrays(arrays: dict) -> bytes:
    out = io.BytesIO()
    for key in sorted(arrays):
        arr = np.ascontiguousarray(arrays[key])
        arr = arr.astype(arr.dtype.newbyteorder("<"))
        kb = key.encode()
        db = arr.dtype.str.encode()
        out.write(struct.pack("<H", len(kb)) + kb)
        out.write(struct.pack("<B", len(db)) + db)
        out.write(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            out.write(struct.pack("<I", d))
        raw = arr.tobytes()
        out.write(struct.pack("<Q", len(raw)))
        out.write(raw)
    return out.getvalue()


def _unpack_arrays(blob: bytes) -> dict:
    arrays = {}
    off = 0
    while off < len(blob):
        (klen,) = struct.unpack_from("<H", blob, off); off += 2
        key = blob[off:off + klen].decode(); off += klen
        (dlen,) = struct.unpack_from("<B", blob, off); off += 1
        dtype = blob[off:off + dlen].decode(); off += dlen
        (ndim,) = struct.unpack_from("<B", blob, off); off += 1
        shape = []
        for _ in range(ndim):
            (d,) = struct.unpack_from("<I", blob, off); off += 4
            shape.append(d)
        (nraw,) = struct.unpack_from("<Q", blob, off); off += 8
        arrays[key] = np.frombuffer(blob[off:off + nraw], dtype=dtype) \
            .reshape(shape).copy()
        off += nraw
    return arrays


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _pack_section(meta: dict, arrays: dict) -> bytes:
    mb = _json_bytes(meta)
    return struct.pack("<I", len(mb)) + mb + _pack_arrays(arrays)


def _unpack_section(blob: bytes) -> tuple[dict, dict]:
    (mlen,) = struct.unpack_from("<I", blob, 0)
    meta = json.loads(blob[4:4 + mlen].decode())
    return meta, _unpack_arrays(blob[4 + mlen:])


# ---------------------------------------------------------------------------
# regressor and SSM (de)serialization helpers

def _regressor_parts(reg: PolyRegressor, prefix: str):
    meta = {"max_degree": reg.max_degree, "ill": bool(reg.ill_conditioned),
            "n_terms": [len(row) for row in reg.terms]}
    arrays = {f"{prefix}/lo": reg.bounds_lo, f"{prefix}/hi": reg.bounds_hi}
    for r, row in enumerate(reg.terms):
        for t, coeffs in enumerate(row):
            arrays[f"{prefix}/t{r:04d}_{t:02d}"] = coeffs
    return meta, arrays


def _regressor_from_parts(meta: dict, arrays: dict, prefix: str) -> PolyRegressor:
    terms = [
        [arrays[f"{prefix}/t{r:04d}_{t:02d}"] for t in range(n)]
        for r, n in enumerate(meta["n_terms"])
    ]
    return PolyRegressor(terms=terms, max_degree=meta["max_degree"],
                         bounds_lo=arrays[f"{prefix}/lo"],
                         bounds_hi=arrays[f"{prefix}/hi"],
                         ill_conditioned=meta["ill"])


def save_model(path, model) -> None:
    """Write a ModelContainer to the OTSM binary container format."""
    sections = []

    sections.append(("config", _pack_section(model.config, {})))
    # wall-clock timings vary between runs; drop them so identical training
    # inputs always serialize byte-identically
    provenance = {k: v for k, v in model.provenance.items() if k != "timings"}
    sections.append(("provenance", _pack_section(provenance, {})))

    grid = model.grid
    sections.append(("grid", _pack_section(
        {"nx": grid.nx, "ny": grid.ny},
        {"origin": grid.origin, "spacing": grid.spacing, "mask": grid.mask})))

    geo_arrays = {"masks": model.masks}
    for k, poly in enumerate(model.polygons):
        geo_arrays[f"poly{k}"] = poly
    sections.append(("geometry", _pack_section(
        {"k": len(model.polygons)}, geo_arrays)))

    sgm = model.sgm
    sgm_meta = {"box": list(sgm.box), "geometry_ids": list(sgm.geometry_ids),
                "interpolating": bool(sgm.interpolating),
                "sigma_g": sgm.ensemble.clouds[0].sigma,
                "total_cost": sgm.ensemble.total_cost}
    sgm_arrays = {}
    for k, cloud in enumerate(sgm.ensemble.clouds):
        sgm_arrays[f"cloud{k}"] = cloud.centers
    for i, perm in enumerate(sgm.ensemble.orderings):
        sgm_arrays[f"ord{i}"] = perm
    sgm_meta["n_orderings"] = len(sgm.ensemble.orderings)
    sections.append(("sgm", _pack_section(sgm_meta, sgm_arrays)))

    for k, ssm in enumerate(model.ssms):
        reg_meta, reg_arrays = _regressor_parts(ssm.regressor, "reg")
        int_meta, int_arrays = _regressor_parts(ssm.integral_model, "int")
        meta = {"geometry_id": ssm.geometry_id, "sigma_s": ssm.sigma_s,
                "n_s": ssm.n_s, "coeff_residual": ssm.coeff_residual,
                "energy_threshold": ssm.pod.energy_threshold,
                "reg": reg_meta, "int": int_meta}
        arrays = {"pod/modes": ssm.pod.modes,
                  "pod/sv": ssm.pod.singular_values,
                  "params": ssm.params, **reg_arrays, **int_arrays}
        sections.append((f"ssm{k}", _pack_section(meta, arrays)))

    sections.append(("orderings", _pack_section(
        {"shape": list(model.orderings.shape)}, {"orderings": model.orderings})))

    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC)
        fh.write(struct.pack("<H", CONTAINER_VERSION))
        for name, payload in sections:
            nb = name.encode()
            fh.write(struct.pack("<B", len(nb)) + nb)
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)


def load_model(path):
    """Read a ModelContainer back from the OTSM binary container format."""
    from .surrogate import SGM, SSM, ModelContainer

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CONTAINER_MAGIC:
        raise FormatError(f"{path} lacks the OTSM magic bytes")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != CONTAINER_VERSION:
        raise FormatError(f"unsupported container version {version}")
    off = 6
    sections = {}
    while off < len(blob):
        (nlen,) = struct.unpack_from("<B", blob, off); off += 1
        name = blob[off:off + nlen].decode(); off += nlen
        (plen,) = struct.unpack_from("<Q", blob, off); off += 8
        sections[name] = blob[off:off + plen]
        off += plen

    config, _ = _unpack_section(sections["config"])
    provenance, _ = _unpack_section(sections["provenance"])

    gmeta, garr = _unpack_section(sections["grid"])
    grid = Grid(origin=garr["origin"], spacing=garr["spacing"],
                nx=gmeta["nx"], ny=gmeta["ny"],
                mask=garr["mask"].astype(bool))

    geo_meta, geo_arr = _unpack_section(sections["geometry"])
    k_geoms = geo_meta["k"]
    polygons = [geo_arr[f"poly{k}"] for k in range(k_geoms)]
    masks = geo_arr["masks"].astype(bool)

    smeta, sarr = _unpack_section(sections["sgm"])
    clouds = [ParticleCloud(centers=sarr[f"cloud{k}"], sigma=smeta["sigma_g"])
              for k in range(len(smeta["geometry_ids"]))]
    orderings = [sarr[f"ord{i}"] for i in range(smeta["n_orderings"])]
    ensemble = MatchedEnsemble(clouds=clouds, total_cost=smeta["total_cost"],
                               orderings=orderings)
    sgm = SGM(ensemble=ensemble, box=tuple(smeta["box"]),
              geometry_ids=smeta["geometry_ids"],
              interpolating=smeta["interpolating"])

    ssms = []
    for k in range(k_geoms):
        meta, arr = _unpack_section(sections[f"ssm{k}"])
        pod = PodBasis(modes=arr["pod/modes"], singular_values=arr["pod/sv"],
                       energy_threshold=meta["energy_threshold"])
        ssms.append(SSM(
            geometry_id=meta["geometry_id"], pod=pod,
            regressor=_regressor_from_parts(meta["reg"], arr, "reg"),
            integral_model=_regressor_from_parts(meta["int"], arr, "int"),
            sigma_s=meta["sigma_s"], n_s=meta["n_s"], params=arr["params"],
            coeff_residual=meta["coeff_residual"]))

    ometa, oarr = _unpack_section(sections["orderings"])
    orderings = oarr["orderings"].reshape(ometa["shape"])

    return ModelContainer(sgm=sgm, ssms=ssms, orderings=orderings, grid=grid,
                          polygons=polygons, masks=masks, config=config,
                          provenance=provenance)
