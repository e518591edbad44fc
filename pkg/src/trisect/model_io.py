"""On-disk model format: a human-readable manifest plus a binary tensor blob.

Two files share a stem: ``model.sqm`` (manifest) and ``model.blob`` (raw
little-endian float32 tensor bytes, row-major, concatenated, offsets 4-byte
aligned). The manifest is a line-oriented token format, version ``sqm-1``::

    format sqm-1
    blob model.blob
    input x 64
    output head
    layer fc0 Linear
    in x
    attr stride 1
    param weight fc0.weight
    end
    tensor fc0.weight fp32 64 64 offset 0 bytes 16384

Integers are decimal text; floats use ``repr`` (round-trips exactly). The
same dialect is reused by the dataset fixtures and the CLI config file.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Iterator

from trisect.errors import (
    ArgumentError,
    BlobBoundsError,
    ParseError,
    UnsupportedKindError,
    VersionError,
)
from trisect.ir import LAYER_KINDS, Graph, Layer
from trisect.tensor import Tensor

FORMAT_VERSION = "sqm-1"


def tokenize(text: str) -> Iterator[tuple[int, list[str]]]:
    """Yield (line number, tokens) for non-empty, non-comment lines."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield lineno, stripped.split()


def format_value(value) -> str:
    if isinstance(value, bool):
        raise ArgumentError("boolean attrs are not part of the format")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    token = str(value)
    if not token or any(ch.isspace() for ch in token):
        raise ArgumentError(f"attr value {value!r} is not a single token")
    return token


def parse_value(token: str):
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


def blob_path_for(manifest_path: Path) -> Path:
    return manifest_path.with_suffix(".blob")


def pack_tensors(named: Iterable[tuple[str, Tensor]]) -> tuple[list[str], bytes]:
    """Directory lines and blob bytes for an ordered set of named tensors."""
    lines: list[str] = []
    blob = bytearray()
    seen: set[str] = set()
    for name, t in named:
        if name in seen:
            raise ArgumentError(f"duplicate tensor name '{name}'")
        seen.add(name)
        offset = len(blob)
        raw = t.tobytes()
        dims = " ".join(str(d) for d in t.shape)
        lines.append(f"tensor {name} fp32 {dims} offset {offset} bytes {len(raw)}")
        blob.extend(raw)
    return lines, bytes(blob)


def parse_tensor_record(tokens: list[str], lineno: int) -> tuple[str, tuple[int, ...], int, int]:
    # tensor <name> fp32 <dims...> offset <o> bytes <b>
    if len(tokens) < 8 or tokens[-4] != "offset" or tokens[-2] != "bytes":
        raise ParseError(f"line {lineno}: malformed tensor record")
    name = tokens[1]
    dtype = tokens[2]
    if dtype != "fp32":
        raise ParseError(f"line {lineno}: unsupported tensor dtype '{dtype}'")
    try:
        dims = tuple(int(d) for d in tokens[3:-4])
        offset = int(tokens[-3])
        nbytes = int(tokens[-1])
    except ValueError:
        raise ParseError(f"line {lineno}: non-integer field in tensor record") from None
    if not dims:
        raise ParseError(f"line {lineno}: tensor '{name}' has no shape")
    return name, dims, offset, nbytes


def unpack_tensor(name: str, dims: tuple[int, ...], offset: int, nbytes: int,
                  blob: bytes) -> Tensor:
    numel = 1
    for d in dims:
        if d < 1:
            raise ParseError(f"tensor '{name}' has invalid dimension {d}")
        numel *= d
    if nbytes != 4 * numel:
        raise ParseError(f"tensor '{name}': {nbytes} bytes does not match shape {dims}")
    if offset % 4 != 0:
        raise BlobBoundsError(f"tensor '{name}': offset {offset} is not 4-byte aligned")
    if offset < 0 or offset + nbytes > len(blob):
        raise BlobBoundsError(
            f"tensor '{name}': [{offset}, {offset + nbytes}) outside blob of {len(blob)} bytes"
        )
    return Tensor.from_bytes(dims, blob[offset:offset + nbytes])


def save_model(g: Graph, path: str | Path) -> tuple[Path, Path]:
    """Write manifest + blob; returns the two paths."""
    manifest_path = Path(path)
    blob_path = blob_path_for(manifest_path)
    lines = [f"format {FORMAT_VERSION}", f"blob {blob_path.name}"]
    for name, shape in g.inputs.items():
        dims = " ".join(str(d) for d in shape)
        lines.append(f"input {name} {dims}")
    lines.append("output " + " ".join(g.outputs))
    named: list[tuple[str, Tensor]] = []
    for layer in g.layers:
        lines.append(f"layer {layer.id} {layer.kind}")
        if layer.inputs:
            lines.append("in " + " ".join(layer.inputs))
        for key in sorted(layer.attrs):
            lines.append(f"attr {key} {format_value(layer.attrs[key])}")
        for pname in sorted(layer.params):
            tname = f"{layer.id}.{pname}"
            lines.append(f"param {pname} {tname}")
            named.append((tname, layer.params[pname]))
        lines.append("end")
    dir_lines, blob = pack_tensors(named)
    lines.extend(dir_lines)
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    blob_path.write_bytes(blob)
    return manifest_path, blob_path


def load_model(path: str | Path) -> Graph:
    """Parse manifest + blob back into a Graph; inverse of save_model."""
    manifest_path = Path(path)
    records = list(tokenize(manifest_path.read_text(encoding="utf-8")))
    if not records:
        raise ParseError(f"{manifest_path}: empty manifest")
    lineno, first = records[0]
    if first[0] != "format" or len(first) != 2:
        raise VersionError(f"line {lineno}: manifest must start with a format record")
    if first[1] != FORMAT_VERSION:
        raise VersionError(f"unsupported format version '{first[1]}' (expected {FORMAT_VERSION})")

    blob_name: str | None = None
    inputs: dict[str, tuple[int, ...]] = {}
    outputs: list[str] = []
    layers: list[Layer] = []
    tensor_entries: list[tuple[str, tuple[int, ...], int, int]] = []
    param_refs: list[tuple[Layer, str, str]] = []
    current: Layer | None = None

    for lineno, tokens in records[1:]:
        head = tokens[0]
        if current is not None:
            if head == "in":
                current.inputs = tuple(tokens[1:])
            elif head == "attr":
                if len(tokens) != 3:
                    raise ParseError(f"line {lineno}: attr takes a name and a value")
                current.attrs[tokens[1]] = parse_value(tokens[2])
            elif head == "param":
                if len(tokens) != 3:
                    raise ParseError(f"line {lineno}: param takes a name and a tensor name")
                param_refs.append((current, tokens[1], tokens[2]))
            elif head == "end":
                if len(tokens) != 1:
                    raise ParseError(f"line {lineno}: end takes no arguments")
                current = None
            else:
                raise ParseError(f"line {lineno}: unexpected '{head}' inside layer block")
            continue
        if head == "blob":
            if len(tokens) != 2:
                raise ParseError(f"line {lineno}: blob takes one filename")
            blob_name = tokens[1]
        elif head == "input":
            if len(tokens) < 3:
                raise ParseError(f"line {lineno}: input needs a name and dimensions")
            try:
                inputs[tokens[1]] = tuple(int(d) for d in tokens[2:])
            except ValueError:
                raise ParseError(f"line {lineno}: non-integer input dimension") from None
        elif head == "output":
            outputs.extend(tokens[1:])
        elif head == "layer":
            if len(tokens) != 3:
                raise ParseError(f"line {lineno}: layer takes an id and a kind")
            kind = tokens[2]
            if kind not in LAYER_KINDS:
                raise UnsupportedKindError(f"line {lineno}: unsupported layer kind '{kind}'")
            current = Layer(id=tokens[1], kind=kind)
            layers.append(current)
        elif head == "tensor":
            tensor_entries.append(parse_tensor_record(tokens, lineno))
        elif head == "format":
            raise ParseError(f"line {lineno}: duplicate format record")
        else:
            raise ParseError(f"line {lineno}: unknown record '{head}'")
    if current is not None:
        raise ParseError(f"layer block '{current.id}' is missing its end record")
    if blob_name is None:
        raise ParseError("manifest does not name a blob file")

    blob = (manifest_path.parent / blob_name).read_bytes()
    tensors: dict[str, Tensor] = {}
    for name, dims, offset, nbytes in tensor_entries:
        if name in tensors:
            raise ParseError(f"duplicate tensor entry '{name}'")
        tensors[name] = unpack_tensor(name, dims, offset, nbytes, blob)
    for layer, pname, tname in param_refs:
        if tname not in tensors:
            raise ParseError(f"layer '{layer.id}' references missing tensor '{tname}'")
        layer.params[pname] = tensors[tname]
    return Graph(layers=layers, inputs=inputs, outputs=outputs)
