"""2D scan machinery and vision blocks built on the selective scan.

Feature maps are (C, H, W) arrays.  Every block has a ``*_fwd`` returning
``(out, ctx)`` and a ``*_bwd(weights, ctx, g)`` giving the input gradient;
the plain function returns only the output.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .activations import d_gelu, d_sigmoid, d_silu, gelu, sigmoid, silu, softplus  # noqa: F401
from .errors import InvalidDimensionError, InvariantViolation, ShapeError
from .scan import SelectiveParams, selective_scan, selective_scan_vjp
from .tensor import Rng

__all__ = [
    "PatchSequence", "ScanRoute", "ROUTES", "patchify", "unpatchify", "route_order",
    "vim_scan", "ss2d", "ss2d_map", "dwconv3x3", "pwconv", "batchnorm_infer",
    "layernorm_channels", "silu", "gelu", "sigmoid", "softplus",
    "VanillaVSSWeights", "VSSWeights", "CrackMambaWeights",
    "vanilla_vss_block", "vss_block", "crackmamba_block",
]


# ------------------------------------------------------------- patching


@dataclass(frozen=True)
class PatchSequence:
    tokens: np.ndarray  # (N, C*hp*wp)
    C: int
    H: int
    W: int
    hp: int
    wp: int

    @property
    def grid(self) -> tuple[int, int]:
        return self.H // self.hp, self.W // self.wp


def patchify(img, hp: int, wp: int) -> PatchSequence:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise ShapeError(f"expected (C, H, W), got {img.shape}")
    C, H, W = img.shape
    if hp < 1 or wp < 1 or H % hp or W % wp:
        raise InvalidDimensionError(f"patch {hp}x{wp} does not tile {H}x{W}")
    gh, gw = H // hp, W // wp
    tokens = img.reshape(C, gh, hp, gw, wp).transpose(1, 3, 0, 2, 4).reshape(gh * gw, C * hp * wp)
    return PatchSequence(tokens, C, H, W, hp, wp)


def unpatchify(ps: PatchSequence) -> np.ndarray:
    gh, gw = ps.grid
    t = ps.tokens.reshape(gh, gw, ps.C, ps.hp, ps.wp).transpose(2, 0, 3, 1, 4)
    return t.reshape(ps.C, ps.H, ps.W)


# --------------------------------------------------------------- routes


class ScanRoute(enum.Enum):
    ROW_FWD = "rowFwd"
    ROW_BWD = "rowBwd"
    COL_FWD = "colFwd"
    COL_BWD = "colBwd"


ROUTES = (ScanRoute.ROW_FWD, ScanRoute.ROW_BWD, ScanRoute.COL_FWD, ScanRoute.COL_BWD)


def route_order(route: ScanRoute, gh: int, gw: int) -> np.ndarray:
    """order[k] = row-major grid index visited at step k."""
    row = np.arange(gh * gw)
    col = (np.arange(gh)[None, :] * gw + np.arange(gw)[:, None]).reshape(-1)
    return {
        ScanRoute.ROW_FWD: row,
        ScanRoute.ROW_BWD: row[::-1].copy(),
        ScanRoute.COL_FWD: col,
        ScanRoute.COL_BWD: col[::-1].copy(),
    }[route]


def _pairwise_sum(parts):
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _routes_fwd(params, seq, orders):
    outs, traces = [], []
    for p, order in zip(params, orders):
        if p.D != seq.shape[1]:
            raise ShapeError(f"route params have D={p.D}, tokens have {seq.shape[1]}")
        y = np.empty_like(seq)
        yr, tr = selective_scan(p, seq[order])
        y[order] = yr
        outs.append(y)
        traces.append(tr)
    return _pairwise_sum(outs), traces


def _routes_bwd(params, traces, orders, g):
    gseq = np.zeros_like(g)
    for p, tr, order in zip(params, traces, orders):
        gseq[order] += selective_scan_vjp(p, tr, g[order])
    return gseq


def vim_scan_fwd(pair, seq):
    seq = np.asarray(seq, dtype=np.float64)
    n = seq.shape[0]
    orders = (np.arange(n), np.arange(n)[::-1].copy())
    out, traces = _routes_fwd(pair, seq, orders)
    return out, (traces, orders)


def vim_scan(pair, seq) -> np.ndarray:
    """Forward route plus the re-reversed backward route over a token sequence."""
    return vim_scan_fwd(pair, seq)[0]


def vim_scan_bwd(pair, ctx, g):
    traces, orders = ctx
    return _routes_bwd(pair, traces, orders, g)


def ss2d_fwd(routes, seq, grid):
    seq = np.asarray(seq, dtype=np.float64)
    gh, gw = grid
    if seq.ndim != 2 or seq.shape[0] != gh * gw:
        raise ShapeError(f"expected ({gh * gw}, E) tokens, got {seq.shape}")
    if len(routes) != 4:
        raise ShapeError("ss2d needs one parameter set per route")
    orders = tuple(route_order(r, gh, gw) for r in ROUTES)
    out, traces = _routes_fwd(routes, seq, orders)
    return out, (traces, orders)


def ss2d(routes, seq, grid) -> np.ndarray:
    """Sum of the four route scans, each mapped back to grid order."""
    return ss2d_fwd(routes, seq, grid)[0]


def ss2d_bwd(routes, ctx, g):
    traces, orders = ctx
    return _routes_bwd(routes, traces, orders, g)


def _map_tokens(x):
    E, H, W = x.shape
    return x.reshape(E, H * W).T


def _tokens_map(t, shape):
    return t.T.reshape(shape)


def ss2d_map_fwd(routes, x):
    x = np.asarray(x, dtype=np.float64)
    out, ctx = ss2d_fwd(routes, _map_tokens(x), x.shape[1:])
    return _tokens_map(out, x.shape), ctx


def ss2d_map(routes, x) -> np.ndarray:
    """SS2D on a (E, H, W) feature map with one token per pixel."""
    return ss2d_map_fwd(routes, x)[0]


def ss2d_map_bwd(routes, ctx, g):
    return _tokens_map(ss2d_bwd(routes, ctx, _map_tokens(g)), g.shape)


def vim_map_fwd(pair, x):
    x = np.asarray(x, dtype=np.float64)
    out, ctx = vim_scan_fwd(pair, _map_tokens(x))
    return _tokens_map(out, x.shape), ctx


def vim_map_bwd(pair, ctx, g):
    return _tokens_map(vim_scan_bwd(pair, ctx, _map_tokens(g)), g.shape)


# ------------------------------------------------------- micro-primitives


def _check_map(x, C=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or (C is not None and x.shape[0] != C):
        raise ShapeError(f"expected ({C if C is not None else 'C'}, H, W), got {x.shape}")
    return x


def dwconv3x3(x, k, b=None):
    """Depth-wise 3x3 cross-correlation, zero padding, stride 1."""
    k = np.asarray(k, dtype=np.float64)
    x = _check_map(x, k.shape[0])
    if k.shape[1:] != (3, 3):
        raise ShapeError(f"kernel must be (C, 3, 3), got {k.shape}")
    C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.zeros_like(x)
    for di in range(3):
        for dj in range(3):
            out += k[:, di, dj, None, None] * xp[:, di : di + H, dj : dj + W]
    if b is not None:
        out += np.asarray(b, dtype=np.float64)[:, None, None]
    return out


def dwconv3x3_vjp(g, k):
    C, H, W = g.shape
    gp = np.zeros((C, H + 2, W + 2))
    for di in range(3):
        for dj in range(3):
            gp[:, di : di + H, dj : dj + W] += k[:, di, dj, None, None] * g
    return gp[:, 1:-1, 1:-1]


def pwconv(x, w, b=None):
    """1x1 convolution; w is (C_out, C_in)."""
    w = np.asarray(w, dtype=np.float64)
    x = _check_map(x, w.shape[1])
    out = np.einsum("oc,chw->ohw", w, x)
    if b is not None:
        out += np.asarray(b, dtype=np.float64)[:, None, None]
    return out


def pwconv_vjp(g, w):
    return np.einsum("oc,ohw->chw", w, g)


@dataclass
class BNStats:
    mean: np.ndarray
    var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5

    @classmethod
    def identity(cls, C: int) -> BNStats:
        """Stats under which batchnorm is the identity map."""
        return cls(np.zeros(C), np.ones(C), np.ones(C), np.zeros(C), eps=0.0)

    def scale(self):
        if np.any(np.asarray(self.var) < 0):
            raise InvariantViolation("batchnorm variance must be non-negative")
        return np.asarray(self.gamma) / np.sqrt(np.asarray(self.var) + self.eps)


def batchnorm_infer(x, bn: BNStats):
    x = _check_map(x, len(bn.mean))
    s = bn.scale()
    return (x - np.asarray(bn.mean)[:, None, None]) * s[:, None, None] + np.asarray(bn.beta)[:, None, None]


def batchnorm_infer_vjp(g, bn: BNStats):
    return g * bn.scale()[:, None, None]


def layernorm_channels_fwd(x, gamma, beta, eps=1e-6):
    x = _check_map(x, len(gamma))
    mu = x.mean(axis=0, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=0, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * np.asarray(gamma)[:, None, None] + np.asarray(beta)[:, None, None]
    return out, (xhat, inv)


def layernorm_channels(x, gamma, beta, eps=1e-6):
    """LayerNorm across channels at every pixel."""
    return layernorm_channels_fwd(x, gamma, beta, eps)[0]


def layernorm_channels_vjp(g, gamma, ctx):
    xhat, inv = ctx
    gh = g * np.asarray(gamma)[:, None, None]
    return inv * (gh - gh.mean(axis=0, keepdims=True) - xhat * (gh * xhat).mean(axis=0, keepdims=True))


# ---------------------------------------------------------------- blocks


def _routes_random(rng: Rng, D: int, N: int, scale: float):
    return [SelectiveParams.random(rng, D, N, scale) for _ in ROUTES]


@dataclass
class VanillaVSSWeights:
    in_x: np.ndarray  # (Di, D)
    in_x_b: np.ndarray
    in_z: np.ndarray  # (Di, D)
    in_z_b: np.ndarray
    dw: np.ndarray  # (Di, 3, 3)
    dw_b: np.ndarray
    routes: list
    out: np.ndarray  # (D, Di)
    out_b: np.ndarray

    @property
    def D(self) -> int:
        return self.in_x.shape[1]

    @classmethod
    def zeros(cls, D: int, expand: int = 2, N: int = 4) -> VanillaVSSWeights:
        Di = expand * D
        return cls(np.zeros((Di, D)), np.zeros(Di), np.zeros((Di, D)), np.zeros(Di),
                   np.zeros((Di, 3, 3)), np.zeros(Di), [SelectiveParams.zeros(Di, N) for _ in ROUTES],
                   np.zeros((D, Di)), np.zeros(D))

    @classmethod
    def random(cls, rng: Rng, D: int, expand: int = 2, N: int = 4, scale: float = 0.5) -> VanillaVSSWeights:
        Di = expand * D
        return cls(rng.normal(0, scale, (Di, D)), rng.normal(0, scale, Di),
                   rng.normal(0, scale, (Di, D)), rng.normal(0, scale, Di),
                   rng.normal(0, scale, (Di, 3, 3)), rng.normal(0, scale, Di),
                   _routes_random(rng, Di, N, scale),
                   rng.normal(0, scale, (D, Di)), rng.normal(0, scale, D))


def vanilla_vss_fwd(x, w: VanillaVSSWeights):
    x = _check_map(x, w.D)
    c = dwconv3x3(pwconv(x, w.in_x, w.in_x_b), w.dw, w.dw_b)
    s, sctx = ss2d_map_fwd(w.routes, silu(c))
    z = pwconv(x, w.in_z, w.in_z_b)
    g = silu(z)
    return pwconv(s * g, w.out, w.out_b), (c, sctx, s, z, g)


def vanilla_vss_bwd(w: VanillaVSSWeights, ctx, gout):
    c, sctx, s, z, g = ctx
    gy = pwconv_vjp(gout, w.out)
    gz = gy * s * d_silu(z)
    ga = ss2d_map_bwd(w.routes, sctx, gy * g)
    gu = dwconv3x3_vjp(ga * d_silu(c), w.dw)
    return pwconv_vjp(gz, w.in_z) + pwconv_vjp(gu, w.in_x)


def vanilla_vss_block(x, w: VanillaVSSWeights) -> np.ndarray:
    """Vanilla Mamba topology with SS2D in place of the 1D scan and a 3x3 DW conv."""
    return vanilla_vss_fwd(x, w)[0]


@dataclass
class VSSWeights:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    mix_in: np.ndarray  # (Di, D)
    mix_in_b: np.ndarray
    dw: np.ndarray
    dw_b: np.ndarray
    routes: list
    mix_out: np.ndarray  # (D, Di)
    mix_out_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    ffn1: np.ndarray  # (Hd, D)
    ffn1_b: np.ndarray
    ffn2: np.ndarray  # (D, Hd)
    ffn2_b: np.ndarray

    @property
    def D(self) -> int:
        return self.ln1_g.shape[0]

    @classmethod
    def zeros(cls, D: int, expand: int = 2, N: int = 4, mlp_ratio: int = 4) -> VSSWeights:
        Di, Hd = expand * D, mlp_ratio * D
        return cls(np.ones(D), np.zeros(D), np.zeros((Di, D)), np.zeros(Di),
                   np.zeros((Di, 3, 3)), np.zeros(Di), [SelectiveParams.zeros(Di, N) for _ in ROUTES],
                   np.zeros((D, Di)), np.zeros(D), np.ones(D), np.zeros(D),
                   np.zeros((Hd, D)), np.zeros(Hd), np.zeros((D, Hd)), np.zeros(D))

    @classmethod
    def random(cls, rng: Rng, D: int, expand: int = 2, N: int = 4, mlp_ratio: int = 4,
               scale: float = 0.5) -> VSSWeights:
        Di, Hd = expand * D, mlp_ratio * D
        return cls(1.0 + rng.normal(0, 0.1, D), rng.normal(0, 0.1, D),
                   rng.normal(0, scale, (Di, D)), rng.normal(0, scale, Di),
                   rng.normal(0, scale, (Di, 3, 3)), rng.normal(0, scale, Di),
                   _routes_random(rng, Di, N, scale),
                   rng.normal(0, scale, (D, Di)), rng.normal(0, scale, D),
                   1.0 + rng.normal(0, 0.1, D), rng.normal(0, 0.1, D),
                   rng.normal(0, scale, (Hd, D)), rng.normal(0, scale, Hd),
                   rng.normal(0, scale, (D, Hd)), rng.normal(0, scale, D))

    def without_ss2d(self) -> VSSWeights:
        d = dict(self.__dict__)
        d["mix_out"] = np.zeros_like(self.mix_out)
        d["mix_out_b"] = np.zeros_like(self.mix_out_b)
        return VSSWeights(**d)


def ffn(x, w1, b1, w2, b2):
    return pwconv(gelu(pwconv(x, w1, b1)), w2, b2)


def vss_fwd(x, w: VSSWeights):
    x = _check_map(x, w.D)
    n1, ln1 = layernorm_channels_fwd(x, w.ln1_g, w.ln1_b)
    c = dwconv3x3(pwconv(n1, w.mix_in, w.mix_in_b), w.dw, w.dw_b)
    s, sctx = ss2d_map_fwd(w.routes, silu(c))
    x1 = x + pwconv(s, w.mix_out, w.mix_out_b)
    n2, ln2 = layernorm_channels_fwd(x1, w.ln2_g, w.ln2_b)
    hpre = pwconv(n2, w.ffn1, w.ffn1_b)
    out = x1 + pwconv(gelu(hpre), w.ffn2, w.ffn2_b)
    return out, (ln1, c, sctx, ln2, hpre)


def vss_bwd(w: VSSWeights, ctx, gout):
    ln1, c, sctx, ln2, hpre = ctx
    gh = pwconv_vjp(gout, w.ffn2) * d_gelu(hpre)
    gx1 = gout + layernorm_channels_vjp(pwconv_vjp(gh, w.ffn1), w.ln2_g, ln2)
    gs = pwconv_vjp(gx1, w.mix_out)
    ga = ss2d_map_bwd(w.routes, sctx, gs)
    gu = dwconv3x3_vjp(ga * d_silu(c), w.dw)
    gn1 = pwconv_vjp(gu, w.mix_in)
    return gx1 + layernorm_channels_vjp(gn1, w.ln1_g, ln1)


def vss_block(x, w: VSSWeights) -> np.ndarray:
    """Encoder-style block: x + SS2D(LN(x)), then + FFN(LN(.))."""
    return vss_fwd(x, w)[0]


@dataclass
class CrackMambaWeights:
    ln_g: np.ndarray
    ln_b: np.ndarray
    dw: np.ndarray  # (D, 3, 3)
    dw_b: np.ndarray
    routes: list
    bn: BNStats
    pw: np.ndarray  # (D, D)
    pw_b: np.ndarray

    @property
    def D(self) -> int:
        return self.ln_g.shape[0]

    @classmethod
    def zeros(cls, D: int, N: int = 4) -> CrackMambaWeights:
        return cls(np.ones(D), np.zeros(D), np.zeros((D, 3, 3)), np.zeros(D),
                   [SelectiveParams.zeros(D, N) for _ in ROUTES], BNStats.identity(D),
                   np.zeros((D, D)), np.zeros(D))

    @classmethod
    def random(cls, rng: Rng, D: int, N: int = 4, scale: float = 0.5) -> CrackMambaWeights:
        bn = BNStats(rng.normal(0, 0.1, D), rng.uniform(0.5, 1.5, D),
                     1.0 + rng.normal(0, 0.1, D), rng.normal(0, 0.1, D))
        return cls(1.0 + rng.normal(0, 0.1, D), rng.normal(0, 0.1, D),
                   rng.normal(0, scale, (D, 3, 3)), rng.normal(0, scale, D),
                   _routes_random(rng, D, N, scale), bn,
                   rng.normal(0, scale, (D, D)), rng.normal(0, scale, D))


def crackmamba_fwd(x, w: CrackMambaWeights):
    x = _check_map(x, w.D)
    n, lnctx = layernorm_channels_fwd(x, w.ln_g, w.ln_b)
    c = dwconv3x3(n, w.dw, w.dw_b)
    m, sctx = ss2d_map_fwd(w.routes, silu(c))
    am = sigmoid(m)
    fpre = pwconv(batchnorm_infer(x, w.bn), w.pw, w.pw_b)
    f = gelu(fpre)
    return x + f * am, (lnctx, c, sctx, m, am, fpre, f)


def crackmamba_bwd(w: CrackMambaWeights, ctx, gout):
    lnctx, c, sctx, m, am, fpre, f = ctx
    gf = gout * am * d_gelu(fpre)
    gx_local = batchnorm_infer_vjp(pwconv_vjp(gf, w.pw), w.bn)
    gm = gout * f * d_sigmoid(m)
    gc = ss2d_map_bwd(w.routes, sctx, gm) * d_silu(c)
    gx_mamba = layernorm_channels_vjp(dwconv3x3_vjp(gc, w.dw), w.ln_g, lnctx)
    return gout + gx_local + gx_mamba


def crackmamba_block(x, w: CrackMambaWeights, return_am: bool = False):
    """x + GELU(PW(BN(x))) * sigmoid(SS2D(SiLU(DW(LN(x)))))."""
    out, ctx = crackmamba_fwd(x, w)
    return (out, ctx[4]) if return_am else out
