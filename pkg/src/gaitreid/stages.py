"""Stage definition shared by training and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class StagePair:
    """Probe and gallery recording points of one evaluation stage (A -> B)."""

    probe_rp: int
    gallery_rp: int

    def __post_init__(self) -> None:
        if self.probe_rp == self.gallery_rp:
            raise ConfigError("probe and gallery recording points must differ")

    @property
    def tag(self) -> str:
        return f"s{self.probe_rp}to{self.gallery_rp}"

    @property
    def label(self) -> str:
        return f"RP{self.probe_rp}->RP{self.gallery_rp}"


def parse_stage(text: str) -> StagePair:
    """Parse a stage written as 'A->B' (or 'A>B')."""
    cleaned = text.replace(" ", "")
    for sep in ("->", ">"):
        if sep in cleaned:
            left, _, right = cleaned.partition(sep)
            try:
                return StagePair(int(left), int(right))
            except ValueError as exc:
                raise ConfigError(f"cannot parse stage {text!r}") from exc
    raise ConfigError(f"cannot parse stage {text!r} (expected 'A->B')")
