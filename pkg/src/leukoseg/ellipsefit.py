"""Direct least-squares ellipse fitting and rasterization.

Numerically stable variant of the constrained conic fit (the reduced
scatter-matrix formulation): minimizes algebraic distance subject to
4ac - b^2 = 1, which guarantees an ellipse when the eigenproblem is
well posed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Ellipse:
    """Centre, semi-axes and axis angle (radians, from +x toward +y)."""

    cx: float
    cy: float
    a: float
    b: float
    theta: float

    def area(self) -> float:
        return float(np.pi * self.a * self.b)


def fit_ellipse(points: np.ndarray) -> Ellipse:
    """Fit an ellipse to (N, 2) boundary points.

    Raises ValueError when the points do not determine an ellipse
    (fewer than 5 points, collinear input, or a degenerate conic).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 5:
        raise ValueError("need at least five (x, y) points")
    x = pts[:, 0]
    y = pts[:, 1]
    # Centre the data for conditioning; shift the conic back afterwards.
    mx, my = x.mean(), y.mean()
    xc = x - mx
    yc = y - my

    d1 = np.column_stack((xc * xc, xc * yc, yc * yc))
    d2 = np.column_stack((xc, yc, np.ones_like(xc)))
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError as exc:
        raise ValueError("degenerate point configuration") from exc
    m = s1 + s2 @ t
    # Premultiply by inv(C) for the constraint matrix C = [[0,0,2],[0,-1,0],[2,0,0]].
    m = np.vstack((m[2] / 2.0, -m[1], m[0] / 2.0))
    evals, evecs = np.linalg.eig(m)
    cond = 4.0 * evecs[0] * evecs[2] - evecs[1] ** 2
    valid = np.flatnonzero((cond > 0) & np.isfinite(evals))
    if valid.size == 0:
        raise ValueError("no elliptical solution for these points")
    a1 = np.real(evecs[:, valid[0]])
    coeffs = np.concatenate((a1, t @ a1))
    return _conic_to_ellipse(coeffs, mx, my)


def _conic_to_ellipse(coeffs: np.ndarray, mx: float, my: float) -> Ellipse:
    a, b, c, d, e, f = (float(v) for v in coeffs)
    # Conic matrix in the centred frame.
    m33 = np.array([[a, b / 2.0], [b / 2.0, c]])
    rhs = np.array([-d / 2.0, -e / 2.0])
    try:
        centre = np.linalg.solve(m33, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("conic has no finite centre") from exc
    mq = np.array([[a, b / 2.0, d / 2.0],
                   [b / 2.0, c, e / 2.0],
                   [d / 2.0, e / 2.0, f]])
    evals, evecs = np.linalg.eigh(m33)
    det33 = np.linalg.det(m33)
    if det33 <= 0:
        raise ValueError("conic is not an ellipse")
    axis_sq = -np.linalg.det(mq) / (det33 * evals)
    if np.any(axis_sq <= 0) or not np.all(np.isfinite(axis_sq)):
        raise ValueError("conic is not an ellipse")
    semi = np.sqrt(axis_sq)
    theta = float(np.arctan2(evecs[1, 0], evecs[0, 0]))
    sa, sb = float(semi[0]), float(semi[1])
    if sb > sa:
        sa, sb = sb, sa
        theta += np.pi / 2.0
    while theta <= -np.pi / 2.0:
        theta += np.pi
    while theta > np.pi / 2.0:
        theta -= np.pi
    return Ellipse(cx=float(centre[0] + mx), cy=float(centre[1] + my),
                   a=sa, b=sb, theta=theta)


def inscribed_ellipse(x1: int, y1: int, x2: int, y2: int) -> Ellipse:
    """Axis-aligned ellipse inscribed in an inclusive bounding box."""
    return Ellipse(cx=(x1 + x2) / 2.0, cy=(y1 + y2) / 2.0,
                   a=max((x2 - x1 + 1) / 2.0, 0.5),
                   b=max((y2 - y1 + 1) / 2.0, 0.5), theta=0.0)


def ellipse_mask(ellipse: Ellipse, shape: tuple[int, int]) -> np.ndarray:
    """Rasterize the filled ellipse over an (H, W) grid (pixel centres)."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    dx = xs - ellipse.cx
    dy = ys - ellipse.cy
    ct = np.cos(ellipse.theta)
    st = np.sin(ellipse.theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    return (u / ellipse.a) ** 2 + (v / ellipse.b) ** 2 <= 1.0


def fit_boundary_ellipse(points: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Fitted-ellipse mask for boundary points, with a bounding-box fallback.

    Degenerate fits (too few or collinear points) fall back to the
    ellipse inscribed in the points' bounding box.
    """
    pts = np.asarray(points)
    try:
        ell = fit_ellipse(pts)
        if not (np.isfinite(ell.a) and np.isfinite(ell.b)) or ell.a <= 0 or ell.b <= 0:
            raise ValueError("unusable fit")
        # Reject wild fits that escape the raster entirely.
        if ell.a > 4 * max(shape) or ell.b > 4 * max(shape):
            raise ValueError("fit diverged")
    except ValueError:
        x1, y1 = pts.min(axis=0)
        x2, y2 = pts.max(axis=0)
        ell = inscribed_ellipse(int(x1), int(y1), int(x2), int(y2))
    return ellipse_mask(ell, shape)
