"""Measurement-angle arithmetic on the eight-element group of multiples of pi/4.

Angles are plain ints taken mod 8; ``k`` stands for ``k*pi/4``. Every update
rule used by the blind and verifiable protocols lives here so the
encryption algebra can be checked in one place.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

AngleZ8 = int

PI = 4
HALF_PI = 2
ALL_ANGLES: tuple[int, ...] = tuple(range(8))
CLIFFORD_ANGLES: tuple[int, ...] = (0, 2, 4, 6)


def z8(k: int) -> AngleZ8:
    return int(k) % 8


def add(a: AngleZ8, b: AngleZ8) -> AngleZ8:
    return (a + b) % 8


def neg(k: AngleZ8) -> AngleZ8:
    return (-k) % 8


def signed(a: AngleZ8, s: int) -> AngleZ8:
    """(-1)^s * a."""
    return neg(a) if s % 2 else a % 8


def radians(k: AngleZ8) -> float:
    return np.pi * (k % 8) / 4


def is_clifford(k: AngleZ8) -> bool:
    return k % 2 == 0


def odd_half_pi(k: AngleZ8) -> int:
    """1 when k is an odd multiple of pi/2, i.e. when -k = k + pi."""
    return int(k % 4 == 2)


def corrected_angle(phi: AngleZ8, s_x: int, s_z: int) -> AngleZ8:
    """Adapted angle (-1)^s_x * phi + s_z * pi."""
    sign = -1 if s_x % 2 else 1
    return (sign * phi + PI * (s_z % 2)) % 8


def ubqc_delta(phi: AngleZ8, theta: AngleZ8, r: int, s_x: int, s_z: int) -> AngleZ8:
    """Blind measurement angle: corrected phi plus theta plus r*pi.

    ``s_x`` and ``s_z`` must already include the input pad bits, as computed
    by `ubqc.blind_delta`.
    """
    return (corrected_angle(phi, s_x, s_z) + theta + PI * (r % 2)) % 8


def vbqc_delta(
    phi: AngleZ8,
    theta: AngleZ8,
    r: int,
    s_x: int,
    s_z: int,
    dummy_bits: Iterable[int] = (),
) -> AngleZ8:
    """Verifiable measurement angle.

    Same as `ubqc_delta` plus pi for every adjacent dummy prepared in |1>.
    Traps and dummies use phi = 0 and zero dependencies.
    """
    parity = sum(int(d) for d in dummy_bits) % 2
    return (ubqc_delta(phi, theta, r, s_x, s_z) + PI * parity) % 8


def combine_theta(theta_owner: AngleZ8, thetas_others: Sequence[AngleZ8], t_bits: Sequence[int]) -> AngleZ8:
    """Angle left on the owner's qubit after the CNOT-and-measure step.

    Each other client's qubit, measured with outcome t, adds (-1)^t times its
    angle.
    """
    if len(thetas_others) != len(t_bits):
        raise ValueError("one measurement bit per contributed angle")
    total = theta_owner
    for theta, t in zip(thetas_others, t_bits):
        total += -theta if t % 2 else theta
    return total % 8


def bridge_correction(b: int) -> AngleZ8:
    """Z-rotation owed to both ends of a bridged edge after middle outcome b.

    The middle qubit is measured at pi/2; the ends then need Z(-pi/2) Z^b.
    """
    return (-HALF_PI + PI * (b % 2)) % 8


def bridge_update(theta: AngleZ8, b: int) -> AngleZ8:
    """Pad angle of an end qubit once its bridge correction is folded in.

    The correction is not applied physically. Instead the qubit is treated as
    already carrying it, so its pad shrinks by the owed rotation.
    """
    return (theta - bridge_correction(b)) % 8


def flipped_plus_angle(angle: AngleZ8, kx: int, kz: int) -> AngleZ8:
    """Angle of X^kx Z^kz |+_angle> (up to phase)."""
    sign = -1 if kx % 2 else 1
    return (sign * (angle + PI * (kz % 2))) % 8
