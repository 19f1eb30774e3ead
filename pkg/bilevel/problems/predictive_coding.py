"""
Predictive-coding network as a bilevel problem.

The inner variables are the stacked layer activities phi = (phi^0, ..., phi^L);
the outer variables are the weights and biases. The inner loss is the energy

    E = 1/2 ||phi^0 - x||^2 + 1/2 sum_l ||phi^{l+1} - tanh(W^l phi^l + b^l)||^2

whose unique minimizer is the feedforward pass, and the outer loss is
C = 1/2 ||phi^L - y||^2.

theta is packed layer by layer: W^l row-major (shape n_{l+1} x n_l), then b^l.
"""

from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core.linalg import Vec, as_vec
from ..errors import DimMismatch, NonPositiveValue
from .base import BilevelProblem

logger = logging.getLogger(__name__)

# max |tanh''|, attained at tanh(a)^2 = 1/3
RHO_SECOND_MAX = 4.0 / (3.0 * np.sqrt(3.0))


def _rho(a):
    return np.tanh(a)


def _rho_prime(a):
    t = np.tanh(a)
    return 1.0 - t * t


def _rho_second(a):
    t = np.tanh(a)
    return -2.0 * t * (1.0 - t * t)


@dataclass(frozen=True, eq=False)
class PredictiveCodingNet(BilevelProblem):
    """
    Layered tanh network with energy-based inner dynamics.

    Attributes:
        sizes: Layer widths (n_0, ..., n_L), at least two layers
        x: Input presented to layer 0
        y: Target for layer L
        params: Initial packed weights/biases, returned by default_theta()
    """
    sizes: tuple[int, ...]
    x: Vec
    y: Vec
    params: Optional[Vec] = None
    name: str = "pcn"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 2:
            raise DimMismatch("A predictive-coding net needs at least two layers")
        if any(s < 1 for s in sizes):
            raise NonPositiveValue(f"Layer sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        x = as_vec(self.x, sizes[0], "x").copy()
        y = as_vec(self.y, sizes[-1], "y").copy()
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        n_theta = self.dims()[1]
        params = np.zeros(n_theta) if self.params is None else as_vec(self.params, n_theta, "params").copy()
        params.setflags(write=False)
        object.__setattr__(self, "params", params)

    # -------------------------------------------------------------------------
    # Construction
    # -------------------------------------------------------------------------

    @classmethod
    def random(cls, sizes: Sequence[int], seed: int = 0) -> PredictiveCodingNet:
        """
        Seeded network, input and target.

        W^l ~ N(0, 1/n_l), b^l ~ N(0, 0.01), x ~ N(0, 1), y ~ N(0, 0.25).
        """
        sizes = tuple(int(s) for s in sizes)
        rng = np.random.default_rng(seed)
        blocks = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            W = rng.standard_normal((n_out, n_in)) / np.sqrt(n_in)
            b = 0.1 * rng.standard_normal(n_out)
            blocks.extend([W.ravel(), b])
        x = rng.standard_normal(sizes[0])
        y = 0.5 * rng.standard_normal(sizes[-1])
        return cls(sizes=sizes, x=x, y=y, params=np.concatenate(blocks))

    @classmethod
    def from_layers(cls, weights, biases, x, y) -> PredictiveCodingNet:
        """Build from explicit per-layer weight matrices and bias vectors."""
        weights = [np.atleast_2d(np.asarray(W, dtype=np.float64)) for W in weights]
        biases = [np.atleast_1d(np.asarray(b, dtype=np.float64)) for b in biases]
        if len(weights) != len(biases) or not weights:
            raise DimMismatch("Need one bias vector per weight matrix")
        sizes = [weights[0].shape[1]]
        for W, b in zip(weights, biases):
            if W.shape[1] != sizes[-1] or b.shape[0] != W.shape[0]:
                raise DimMismatch(f"Layer shapes do not chain: W {W.shape}, b {b.shape}")
            sizes.append(W.shape[0])
        params = np.concatenate([a for W, b in zip(weights, biases) for a in (W.ravel(), b)])
        return cls(sizes=tuple(sizes), x=x, y=y, params=params)

    def unpack(self, theta) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split packed theta into [(W^0, b^0), ..., (W^{L-1}, b^{L-1})] views."""
        theta = np.asarray(theta, dtype=np.float64)
        layers = []
        pos = 0
        for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]):
            W = theta[pos:pos + n_out * n_in].reshape(n_out, n_in)
            pos += n_out * n_in
            b = theta[pos:pos + n_out]
            pos += n_out
            layers.append((W, b))
        return layers

    def split_phi(self, phi) -> list[np.ndarray]:
        bounds = np.cumsum(self.sizes)[:-1]
        return np.split(np.asarray(phi, dtype=np.float64), bounds)

    def dims(self) -> tuple[int, int]:
        n_theta = sum(n_out * n_in + n_out for n_in, n_out in zip(self.sizes[:-1], self.sizes[1:]))
        return sum(self.sizes), n_theta

    def default_theta(self) -> Vec:
        return np.array(self.params)

    # -------------------------------------------------------------------------
    # Energy and derivatives
    # -------------------------------------------------------------------------

    def _layer_terms(self, phi, theta):
        """Yield (l, W, phi^l, pre-activation a, residual r) for each layer."""
        blocks = self.split_phi(phi)
        for l, (W, b) in enumerate(self.unpack(theta)):
            a = W @ blocks[l] + b
            r = blocks[l + 1] - _rho(a)
            yield l, W, blocks[l], a, r

    def inner_loss(self, phi, theta) -> float:
        d0 = self.split_phi(phi)[0] - self.x
        energy = 0.5 * float(d0 @ d0)
        for _, _, _, _, r in self._layer_terms(phi, theta):
            energy += 0.5 * float(r @ r)
        return energy

    def outer_loss(self, phi, theta) -> float:
        d = self.split_phi(phi)[-1] - self.y
        return 0.5 * float(d @ d)

    def grad_phi_inner(self, phi, theta) -> Vec:
        grads = [np.zeros(n) for n in self.sizes]
        grads[0] += self.split_phi(phi)[0] - self.x
        for l, W, _, a, r in self._layer_terms(phi, theta):
            grads[l + 1] += r
            grads[l] -= W.T @ (_rho_prime(a) * r)
        return np.concatenate(grads)

    def grad_theta_inner(self, phi, theta) -> Vec:
        parts = []
        for _, _, phi_l, a, r in self._layer_terms(phi, theta):
            e = _rho_prime(a) * r
            parts.extend([-np.outer(e, phi_l).ravel(), -e])
        return np.concatenate(parts)

    def grad_phi_outer(self, phi, theta) -> Vec:
        g = np.zeros(self.dims()[0])
        g[-self.sizes[-1]:] = self.split_phi(phi)[-1] - self.y
        return g

    def grad_theta_outer(self, phi, theta) -> Vec:
        return np.zeros(self.dims()[1])

    def hvp_inner(self, phi, theta, v) -> Vec:
        vb = self.split_phi(v)
        out = [np.zeros(n) for n in self.sizes]
        out[0] += vb[0]
        for l, W, _, a, r in self._layer_terms(phi, theta):
            da = W @ vb[l]
            dr = vb[l + 1] - _rho_prime(a) * da
            de = _rho_second(a) * da * r + _rho_prime(a) * dr
            out[l + 1] += dr
            out[l] -= W.T @ de
        return np.concatenate(out)

    def hvp_outer(self, phi, theta, v) -> Vec:
        out = np.zeros(self.dims()[0])
        n_last = self.sizes[-1]
        out[-n_last:] = np.asarray(v, dtype=np.float64)[-n_last:]
        return out

    def curvature_bound(self, phi, theta, beta: float) -> float:
        """
        Bound on the augmented Hessian norm over the sublevel set of phi.

        Each layer adds 1 + ||W||^2 from its Gauss-Newton block and at most
        max|tanh''| ||W||^2 ||r|| from the residual term, and ||r|| stays
        below sqrt(2 E(phi)) while descent does not increase the energy.
        """
        level = self.inner_loss(phi, theta) + abs(beta) * self.outer_loss(phi, theta)
        r_max = np.sqrt(2.0 * level)
        bound = 1.0 + abs(beta)
        for W, _ in self.unpack(theta):
            w2 = float(np.linalg.norm(W, 2)) ** 2
            bound += 1.0 + w2 * (1.0 + RHO_SECOND_MAX * r_max)
        return bound

    def cross_vjp_inner(self, phi, theta, v) -> Vec:
        vb = self.split_phi(v)
        parts = []
        for l, W, phi_l, a, r in self._layer_terms(phi, theta):
            rp = _rho_prime(a)
            u = W @ vb[l]
            q = -vb[l + 1] * rp - u * (_rho_second(a) * r - rp * rp)
            e = rp * r
            parts.extend([(np.outer(q, phi_l) - np.outer(e, vb[l])).ravel(), q])
        return np.concatenate(parts)


def forward_pass(net: PredictiveCodingNet, x, theta=None) -> Vec:
    """
    Stacked activities of the explicit feedforward computation.

    phi^0 = x and phi^{l+1} = tanh(W^l phi^l + b^l). The energy is exactly
    zero here.

    Raises:
        DimMismatch: x does not match the input layer
    """
    x = as_vec(x, name="x")
    if x.shape[0] != net.sizes[0]:
        raise DimMismatch(f"x has dimension {x.shape[0]}, input layer has {net.sizes[0]}")
    theta = net.default_theta() if theta is None else as_vec(theta, net.dims()[1], "theta")
    acts = [x]
    for W, b in net.unpack(theta):
        acts.append(_rho(W @ acts[-1] + b))
    return np.concatenate(acts)
