"""
Binary scan archives (``.msb``).

Layout: magic ``MSB1``, a header record, a LEB128 varint row count, then one
fixed-width record per row. Record layouts come from the ``Annotated`` metadata
of pydantic fields, e.g. ``theta: Annotated[float, Float64]``.
"""
import struct
import typing as tp

import leb128  # type: ignore
import numpy as np
import typing_extensions as te
from pydantic import BaseModel

from memoryscope.errors import ArchiveError
from memoryscope.experiment import COLUMNS, ScanDataset

MAGIC = b"MSB1"


class Buffer:
    def __init__(self, data: bytes = b"") -> None:
        self.buffer = bytearray(data)
        self.position = 0

    def remaining(self) -> int:
        return len(self.buffer) - self.position

    def read_bytes(self, length: int) -> bytes:
        if length > self.remaining():
            raise ArchiveError(
                f"truncated archive: need {length} bytes at offset {self.position}, "
                f"{self.remaining()} left"
            )
        packet = bytes(self.buffer[self.position : self.position + length])
        self.position += length
        return packet

    def read_varint(self) -> int:
        packets = bytearray()
        while True:
            packet = self.read_bytes(1)[0]
            packets.append(packet)
            if packet < 0x80:
                break
        return int(leb128.u.decode(packets))

    def read_formatted(self, fmt: str) -> tp.Any:
        s = struct.Struct("<" + fmt)
        return s.unpack(self.read_bytes(s.size))[0]

    def write_bytes(self, data: bytes) -> None:
        self.buffer.extend(data)

    def write_varint(self, value: int) -> None:
        if value < 0:
            raise ArchiveError(f"varints are unsigned, got {value}")
        self.buffer.extend(leb128.u.encode(value))

    def write_formatted(self, fmt: str, value: tp.Any) -> None:
        self.write_bytes(struct.pack("<" + fmt, value))

    def getvalue(self) -> bytes:
        return bytes(self.buffer)


class Codec(tp.Protocol):
    @classmethod
    def read(cls, buf: Buffer) -> tp.Any:
        ...

    @classmethod
    def write(cls, buf: Buffer, value: tp.Any) -> None:
        ...


class Float64:
    @classmethod
    def read(cls, buf: Buffer) -> float:
        return float(buf.read_formatted("d"))

    @classmethod
    def write(cls, buf: Buffer, value: float) -> None:
        buf.write_formatted("d", float(value))


class String:
    """UTF-8 text prefixed with its byte length as a varint."""

    @classmethod
    def read(cls, buf: Buffer) -> str:
        length = buf.read_varint()
        return buf.read_bytes(length).decode("utf-8")

    @classmethod
    def write(cls, buf: Buffer, value: str) -> None:
        data = value.encode("utf-8")
        buf.write_varint(len(data))
        buf.write_bytes(data)


class Record(BaseModel):
    """Pydantic model whose binary layout is the field order and codec annotations."""

    @classmethod
    def layout(cls) -> list[tuple[str, type[Codec]]]:
        out = []
        for name, field in cls.model_fields.items():
            codecs = [m for m in field.metadata if isinstance(m, type) and hasattr(m, "read")]
            if not codecs:
                raise ArchiveError(f"{cls.__name__}.{name} has no codec annotation")
            out.append((name, codecs[0]))
        return out

    def write(self, buf: Buffer) -> None:
        for name, codec in self.layout():
            codec.write(buf, getattr(self, name))

    @classmethod
    def read(cls, buf: Buffer) -> te.Self:
        return cls(**{name: codec.read(buf) for name, codec in cls.layout()})


class ArchiveHeader(Record):
    label: te.Annotated[str, String]
    columns: te.Annotated[str, String]


class ScanRecord(Record):
    theta: te.Annotated[float, Float64]
    phi: te.Annotated[float, Float64]
    theta_loc: te.Annotated[float, Float64]
    phi_loc: te.Annotated[float, Float64]
    increase: te.Annotated[float, Float64]
    normalized_increase: te.Annotated[float, Float64]


def dump_archive(dataset: ScanDataset) -> bytes:
    buf = Buffer()
    buf.write_bytes(MAGIC)
    ArchiveHeader(label=dataset.label, columns=",".join(COLUMNS)).write(buf)
    buf.write_varint(len(dataset))
    for row in dataset.table():
        ScanRecord(**dict(zip(COLUMNS, row.tolist()))).write(buf)
    return buf.getvalue()


def read_archive(data: bytes) -> ScanDataset:
    buf = Buffer(data)
    if buf.read_bytes(len(MAGIC)) != MAGIC:
        raise ArchiveError("not a memoryscope scan archive")
    header = ArchiveHeader.read(buf)
    if header.columns != ",".join(COLUMNS):
        raise ArchiveError(f"unexpected columns '{header.columns}'")
    count = buf.read_varint()
    records = [ScanRecord.read(buf) for _ in range(count)]
    if buf.remaining():
        raise ArchiveError(f"{buf.remaining()} trailing bytes after {count} records")
    columns = {
        name: np.array([getattr(r, name) for r in records], dtype=np.float64) for name in COLUMNS
    }
    return ScanDataset(label=header.label, **columns)
