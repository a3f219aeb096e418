"""Effective receptive field pipeline.

Contributions are input gradients of the central output units, computed by
reverse-mode accumulation through a :class:`BlockGraph`.  Central finite
differences (:func:`fd_gradient_oracle`) are kept as an independent check.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import vision as V
from .errors import DegenerateMapError, InvalidDimensionError, NumericRangeError, ShapeError
from .scan import MambaWeights, SelectiveParams, mamba_block_bwd, mamba_block_fwd
from .tensor import Rng, pgm_write


def fmt9(v: float) -> str:
    return f"{v:.9g}"


# ---------------------------------------------------------------- blocks


class Block:
    """A differentiable map between (C, H, W) feature maps."""

    name = "block"
    in_ch: int
    out_ch: int

    def forward(self, x):
        raise NotImplementedError

    def backward(self, ctx, g):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)[0]


class Identity(Block):
    name = "identity"

    def __init__(self, channels: int):
        self.in_ch = self.out_ch = channels

    def forward(self, x):
        return np.array(x, dtype=np.float64), None

    def backward(self, ctx, g):
        return g


class Scale(Block):
    name = "scale"

    def __init__(self, channels: int, c: float):
        self.in_ch = self.out_ch = channels
        self.c = float(c)

    def forward(self, x):
        return self.c * np.asarray(x, dtype=np.float64), None

    def backward(self, ctx, g):
        return self.c * g


class DWConv(Block):
    name = "dwconv"

    def __init__(self, k, b=None):
        self.k = np.asarray(k, dtype=np.float64)
        self.b = None if b is None else np.asarray(b, dtype=np.float64)
        self.in_ch = self.out_ch = self.k.shape[0]

    def forward(self, x):
        return V.dwconv3x3(x, self.k, self.b), None

    def backward(self, ctx, g):
        return V.dwconv3x3_vjp(g, self.k)


class PWConv(Block):
    name = "pwconv"

    def __init__(self, w, b=None):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = None if b is None else np.asarray(b, dtype=np.float64)
        self.out_ch, self.in_ch = self.w.shape

    def forward(self, x):
        return V.pwconv(x, self.w, self.b), None

    def backward(self, ctx, g):
        return V.pwconv_vjp(g, self.w)


class SS2DBlock(Block):
    name = "ss2d"

    def __init__(self, routes):
        self.routes = list(routes)
        self.in_ch = self.out_ch = self.routes[0].D

    def forward(self, x):
        return V.ss2d_map_fwd(self.routes, x)

    def backward(self, ctx, g):
        return V.ss2d_map_bwd(self.routes, ctx, g)


class VimBlock(Block):
    name = "vim"

    def __init__(self, pair):
        self.pair = list(pair)
        self.in_ch = self.out_ch = self.pair[0].D

    def forward(self, x):
        return V.vim_map_fwd(self.pair, x)

    def backward(self, ctx, g):
        return V.vim_map_bwd(self.pair, ctx, g)


class MambaBlock(Block):
    """Vanilla Mamba block over pixels taken as a row-major token sequence."""

    name = "mamba"

    def __init__(self, w: MambaWeights):
        self.w = w
        self.in_ch = self.out_ch = w.D

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        C, H, W = x.shape
        y, ctx = mamba_block_fwd(x.reshape(C, H * W).T, self.w)
        return y.T.reshape(C, H, W), ctx

    def backward(self, ctx, g):
        C, H, W = g.shape
        return mamba_block_bwd(self.w, ctx, g.reshape(C, H * W).T).T.reshape(C, H, W)


class _WeightedBlock(Block):
    _fwd = _bwd = None

    def __init__(self, w):
        self.w = w
        self.in_ch = self.out_ch = w.D

    def forward(self, x):
        return type(self)._fwd(x, self.w)

    def backward(self, ctx, g):
        return type(self)._bwd(self.w, ctx, g)


class VanillaVSS(_WeightedBlock):
    name = "vanilla-vss"
    _fwd = staticmethod(V.vanilla_vss_fwd)
    _bwd = staticmethod(V.vanilla_vss_bwd)


class VSS(_WeightedBlock):
    name = "vss"
    _fwd = staticmethod(V.vss_fwd)
    _bwd = staticmethod(V.vss_bwd)


class CrackMamba(_WeightedBlock):
    name = "crackmamba"
    _fwd = staticmethod(V.crackmamba_fwd)
    _bwd = staticmethod(V.crackmamba_bwd)


class BlockGraph:
    """Ordered chain of blocks with fixed weights."""

    def __init__(self, blocks: Sequence[Block]):
        if not blocks:
            raise ShapeError("empty graph")
        for a, b in zip(blocks, blocks[1:]):
            if a.out_ch != b.in_ch:
                raise ShapeError(f"{a.name} emits {a.out_ch} channels, {b.name} expects {b.in_ch}")
        self.blocks = list(blocks)

    @property
    def in_ch(self) -> int:
        return self.blocks[0].in_ch

    @property
    def out_ch(self) -> int:
        return self.blocks[-1].out_ch

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[0] != self.in_ch:
            raise ShapeError(f"graph expects ({self.in_ch}, H, W), got {x.shape}")
        ctxs = []
        for blk in self.blocks:
            x, ctx = blk.forward(x)
            ctxs.append(ctx)
        return x, ctxs

    def backward(self, ctxs, g):
        for blk, ctx in zip(reversed(self.blocks), reversed(ctxs)):
            g = blk.backward(ctx, g)
        return g

    def __call__(self, x):
        return self.forward(x)[0]


def center_index(h: int, w: int) -> tuple[int, int]:
    return h // 2, w // 2


# ---------------------------------------------------------- contributions


@dataclass
class ContributionMap:
    perImage: np.ndarray  # ON, (B, C, H, W)

    @property
    def clamped(self) -> np.ndarray:
        return np.maximum(self.perImage, 0.0)

    @property
    def final(self) -> np.ndarray:
        return erf_image(self)


def central_gradient(graph: BlockGraph, image) -> np.ndarray:
    """d(sum_j u_j)/dI for the central units u_j of one image."""
    out, ctxs = graph.forward(image)
    ch, cw = center_index(*out.shape[1:])
    seed = np.zeros_like(out)
    seed[:, ch, cw] = 1.0
    g = graph.backward(ctxs, seed)
    if not np.all(np.isfinite(g)):
        raise NumericRangeError("non-finite gradient")
    return g


def contribution(graph: BlockGraph, images) -> ContributionMap:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    # cross-image derivatives vanish, so each image only sees its own central units
    return ContributionMap(np.stack([central_gradient(graph, im) for im in images]))


def erf_image(cm: ContributionMap) -> np.ndarray:
    """Clamp, aggregate over images and channels, log10(. + 1), divide by the max."""
    agg = cm.clamped.sum(axis=(0, 1))
    A = np.log10(agg + 1.0)
    peak = A.max()
    if not peak > 0:
        raise DegenerateMapError("no positive contribution")
    return A / peak


def fd_gradient_oracle(graph: BlockGraph, image, step: float = 1e-6) -> np.ndarray:
    """Central differences of the central-unit sum with respect to each input pixel."""
    if not step > 0:
        raise ValueError("step must be positive")
    x = np.array(image, dtype=np.float64)
    out = graph(x)
    ch, cw = center_index(*out.shape[1:])

    def f(v):
        return graph(v)[:, ch, cw].sum()

    grad = np.empty_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def gradient_rel_error(rev, fd, floor: float = 1e-8) -> float:
    """max |rev - fd| / max(max |fd|, floor)."""
    rev = np.asarray(rev)
    fd = np.asarray(fd)
    return float(np.max(np.abs(rev - fd)) / max(float(np.max(np.abs(fd))), floor))


@dataclass(frozen=True)
class CrossProfile:
    crossMean: float
    offCrossMean: float
    centerIsMax: bool


def cross_profile(erf) -> CrossProfile:
    erf = np.asarray(erf, dtype=np.float64)
    if erf.ndim != 2:
        raise ShapeError("expected an (H, W) map")
    H, W = erf.shape
    if H % 2 == 0 or W % 2 == 0:
        raise InvalidDimensionError(f"cross profile needs odd dims, got {H}x{W}")
    ch, cw = H // 2, W // 2
    mask = np.zeros((H, W), dtype=bool)
    mask[ch, :] = True
    mask[:, cw] = True
    off = erf[~mask]
    return CrossProfile(
        float(erf[mask].mean()),
        float(off.mean()) if off.size else 0.0,
        bool(erf[ch, cw] >= erf.max()),
    )


def write_erf_pgm(A, path) -> None:
    pgm_write(np.asarray(A)[None], path)


def write_erf_csv(A, path) -> None:
    A = np.asarray(A)
    lines = [",".join(fmt9(v) for v in row) for row in A]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


# -------------------------------------------------------- synthetic data


def synth_cracks(rng: Rng, count: int, size: int, width: int = 2, noise: float = 0.1):
    """Random-walk cracks on a noisy background.  Returns (images, masks), each (1, size, size)."""
    if width < 1 or size < 16:
        raise InvalidDimensionError("need width >= 1 and size >= 16")
    if 2 * width >= size:
        raise InvalidDimensionError("crack wider than the image")
    images, masks = [], []
    lo, hi = 0, size - width
    for _ in range(count):
        mask = np.zeros((size, size))
        r = rng.integers(lo, hi + 1)
        for c in range(size):
            r = min(max(r + rng.integers(-1, 2), lo), hi)
            mask[r : r + width, c] = 1.0
        if rng.random() < 0.5:
            mask = mask.T.copy()
        if noise > 0:
            img = np.clip(mask + rng.normal(0.0, noise, size=(size, size)), 0.0, 1.0)
        else:
            img = mask.copy()
        images.append(img[None])
        masks.append(mask[None])
    return images, masks


# ------------------------------------------------------ graph factories


def decaying_routes(rng: Rng, D: int, N: int = 4, scale: float = 0.1):
    """Route parameters with positive taps and |Abar| < 1, as used for ERF profiling."""
    return [SelectiveParams.random(rng, D, N, scale, bias_b=1.0, bias_c=1.0) for _ in V.ROUTES]


BLOCK_NAMES = ("identity", "dwconv", "ss2d", "vim", "mamba", "vanilla-vss", "vss", "crackmamba")


def make_graph(name: str, rng: Rng, in_ch: int = 1, dim: int = 4, state: int = 4,
               scale: float = 0.5) -> BlockGraph:
    """A stem 1x1 conv (in_ch -> dim) followed by the named block, with seeded weights."""
    if name == "identity":
        return BlockGraph([Identity(in_ch)])
    if name == "dwconv":
        return BlockGraph([DWConv(np.ones((in_ch, 3, 3)))])
    stem = PWConv(np.abs(rng.normal(0.0, 1.0, (dim, in_ch))) + 0.1)
    if name == "ss2d":
        blk = SS2DBlock(decaying_routes(rng, dim, state))
    elif name == "vim":
        blk = VimBlock(decaying_routes(rng, dim, state)[:2])
    elif name == "mamba":
        blk = MambaBlock(MambaWeights.random(rng, dim, N=state, scale=scale))
    elif name == "vanilla-vss":
        blk = VanillaVSS(V.VanillaVSSWeights.random(rng, dim, N=state, scale=scale))
    elif name == "vss":
        blk = VSS(V.VSSWeights.random(rng, dim, N=state, scale=scale))
    elif name == "crackmamba":
        blk = CrackMamba(V.CrackMambaWeights.random(rng, dim, N=state, scale=scale))
    else:
        raise ValueError(f"unknown block {name!r}; choose from {BLOCK_NAMES}")
    return BlockGraph([stem, blk])
