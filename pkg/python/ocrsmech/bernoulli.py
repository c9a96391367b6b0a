# This file is part of ocrsmech.
#
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
"""Bernoulli factories.

A `Coin` turns draws of underlying coins into a coin with a new bias.  Only
leaf coins (constant coins and coins backed by an external sampler, such as
a scheme simulation) count tosses; the auxiliary fair bits and geometric
draws a combinator takes from its own random stream are free.  ``tosses`` of
a composite coin is the total over its distinct leaves, so a leaf shared by
two branches is counted once per toss.

The doubling factory is a linear-function random walk: with ``i`` heads of
a ``C*p`` coin still owed, a ``p``-coin head pays one off and a tail adds a
geometric number of new ones.  Once ``i`` grows past ``2.3/(gamma*eps)`` the
walk either stops with output 0 or inflates ``C`` by ``1 + gamma*eps``.
"""

import numpy as np

__all__ = ["DOUBLING_TOSS_CONSTANT", "PUBLISHED_DIVISION_CONSTANT", "Coin", "ConstantCoin", "SamplerCoin",
           "NegatedCoin", "ScaledCoin", "AveragedCoin", "DoubledCoin", "DividedCoin", "constantCoin",
           "samplerCoin", "negate", "scale", "average", "double", "add", "subtract", "divide",
           "doublingTossBound", "divisionTossBound", "divisionRoundLaw"]

# Mean leaf tosses of double(c, delta) are at most DOUBLING_TOSS_CONSTANT/delta.
DOUBLING_TOSS_CONSTANT = 9.5
# Constant of the published division bound, reported next to ours.
PUBLISHED_DIVISION_CONSTANT = 22.12

_WALK_GAMMA = 0.5
_WALK_THRESHOLD = 2.3


class Coin:
    """Base class of all coins.

    Parameters
    ----------
    rng : `numpy.random.Generator`
        Stream for the coin's own auxiliary randomness.
    children : `tuple` [`Coin`], optional
        Coins this one draws from.
    bias : `float`, optional
        Declared bias when it is known.
    """
    def __init__(self, rng, children=(), bias=None):
        self.rng = rng
        self.children = tuple(children)
        self.bias = bias
        self.samples = 0
        self._ownTosses = 0

    def _leaves(self, found):
        if not self.children:
            found[id(self)] = self
        for child in self.children:
            child._leaves(found)
        return found

    @property
    def tosses(self):
        """Leaf tosses consumed so far."""
        return sum(leaf._ownTosses for leaf in self._leaves({}).values())

    def sample(self):
        """Draw one output bit."""
        self.samples += 1
        return self._sample()

    def sampleMany(self, nSamples):
        return np.fromiter((self.sample() for _ in range(nSamples)), dtype=np.int8, count=nSamples)

    def _sample(self):
        raise NotImplementedError


class ConstantCoin(Coin):
    """Coin of known bias ``p``; one toss per sample."""
    def __init__(self, p, rng):
        if not 0.0 <= p <= 1.0:
            raise ValueError("coin bias must lie in [0, 1], got %r" % (p, ))
        super().__init__(rng, bias=float(p))

    def _sample(self):
        self._ownTosses += 1
        return int(self.rng.random() < self.bias)


class SamplerCoin(Coin):
    """Coin backed by an arbitrary bit sampler; one toss per sample.

    Parameters
    ----------
    sampler : callable
        ``sampler()`` returning 0 or 1.
    rng : `numpy.random.Generator`
    bias : `float`, optional
    """
    def __init__(self, sampler, rng, bias=None):
        super().__init__(rng, bias=bias)
        self._sampler = sampler

    def _sample(self):
        self._ownTosses += 1
        return int(self._sampler())


class NegatedCoin(Coin):
    def __init__(self, coin):
        super().__init__(coin.rng, (coin, ), None if coin.bias is None else 1.0 - coin.bias)

    def _sample(self):
        return 1 - self.children[0].sample()


class ScaledCoin(Coin):
    """``lambda*p`` from a ``lambda`` coin and a ``p`` coin."""
    def __init__(self, coin, factor):
        if not 0.0 <= factor <= 1.0:
            raise ValueError("scale factor must lie in [0, 1], got %r" % (factor, ))
        factorCoin = ConstantCoin(factor, coin.rng)
        super().__init__(coin.rng, (factorCoin, coin), None if coin.bias is None else factor*coin.bias)

    def _sample(self):
        if self.children[0].sample() == 0:
            return 0
        return self.children[1].sample()


class AveragedCoin(Coin):
    """``(p0 + p1)/2`` using a free fair bit."""
    def __init__(self, coin0, coin1):
        bias = None
        if coin0.bias is not None and coin1.bias is not None:
            bias = 0.5*(coin0.bias + coin1.bias)
        super().__init__(coin0.rng, (coin0, coin1), bias)

    def _sample(self):
        return self.children[int(self.rng.random() < 0.5)].sample()


class DoubledCoin(Coin):
    """``2p`` for a coin with ``p <= 1/2 - delta``.

    The precondition cannot be checked at runtime; a coin outside it yields
    a biased output.
    """
    def __init__(self, coin, delta):
        if not 0.0 < delta <= 0.5:
            raise ValueError("delta must lie in (0, 1/2], got %r" % (delta, ))
        super().__init__(coin.rng, (coin, ), None if coin.bias is None else 2.0*coin.bias)
        self.delta = float(delta)

    def _sample(self):
        coin = self.children[0]
        owed = 1
        multiplier = 2.0
        eps = 2.0*self.delta
        threshold = _WALK_THRESHOLD/(_WALK_GAMMA*eps)
        while True:
            if owed == 0:
                return 1
            if owed >= threshold:
                if self.rng.random() >= (1.0 + _WALK_GAMMA*eps)**(-owed):
                    return 0
                multiplier *= 1.0 + _WALK_GAMMA*eps
                eps = 1.0 - (1.0 + _WALK_GAMMA*eps)*(1.0 - eps)
                threshold = _WALK_THRESHOLD/(_WALK_GAMMA*eps)
            if coin.sample():
                owed -= 1
            else:
                owed += int(self.rng.geometric(1.0 - 1.0/multiplier)) - 1


class DividedCoin(Coin):
    """``p0/p1`` from a ``p0`` coin and a ``(p1 - p0)`` coin.

    Each round draws a fair bit; heads asks the ``p0`` coin (a head ends the
    run with 1), tails asks the difference coin (a head ends it with 0).
    Rounds are geometric with parameter ``p1/2``.
    """
    def __init__(self, coin0, difference, bias=None):
        super().__init__(coin0.rng, (coin0, difference), bias)
        self.lastRounds = 0
        self.roundCounts = []

    def _sample(self):
        rounds = 0
        while True:
            rounds += 1
            if self.rng.random() < 0.5:
                if self.children[0].sample():
                    break
            elif self.children[1].sample():
                self.lastRounds = rounds
                self.roundCounts.append(rounds)
                return 0
        self.lastRounds = rounds
        self.roundCounts.append(rounds)
        return 1


def constantCoin(p, rng):
    """Coin with exact bias ``p``."""
    return ConstantCoin(p, rng)


def samplerCoin(sampler, rng, bias=None):
    return SamplerCoin(sampler, rng, bias=bias)


def negate(coin):
    """``1 - p``."""
    return NegatedCoin(coin)


def scale(coin, factor):
    """``factor*p`` for ``factor`` in [0, 1]."""
    return ScaledCoin(coin, factor)


def average(coin0, coin1):
    """``(p0 + p1)/2``."""
    return AveragedCoin(coin0, coin1)


def double(coin, delta):
    """``2p``, valid when ``p <= 1/2 - delta``."""
    return DoubledCoin(coin, delta)


def add(coin0, coin1, delta):
    """``p0 + p1``, valid when ``p0 + p1 <= 1 - delta``."""
    if not delta > 0.0:
        raise ValueError("delta must be positive, got %r" % (delta, ))
    return double(average(coin0, coin1), delta/2.)


def subtract(coin0, coin1, delta):
    """``p1 - p0``, valid when ``p1 - p0 >= delta``."""
    return negate(add(negate(coin1), coin0, delta))


def divide(coin0, coin1, delta):
    """``p0/p1``, valid when ``p1 - p0 >= delta > 0``.

    Parameters
    ----------
    coin0, coin1 : `Coin`
        Numerator and denominator coins.
    delta : `float`
        Known lower bound on ``p1 - p0``.

    Returns
    -------
    coin : `DividedCoin`
    """
    if not delta > 0.0:
        raise ValueError("delta must be positive, got %r" % (delta, ))
    bias = None
    if coin0.bias is not None and coin1.bias is not None and coin1.bias > 0.0:
        bias = coin0.bias/coin1.bias
    return DividedCoin(coin0, subtract(coin0, coin1, delta), bias=bias)


def doublingTossBound(delta):
    """Upper bound on mean leaf tosses of one doubled-coin sample."""
    return DOUBLING_TOSS_CONSTANT/delta


def divisionTossBound(p1, delta, constant=None):
    """Upper bound on mean leaf tosses of one divided-coin sample.

    With the default constant every round costs at most
    ``1/2 + doublingTossBound(delta/2)/2`` tosses and there are ``2/p1``
    rounds on average.
    """
    if constant is None:
        constant = 2.0*DOUBLING_TOSS_CONSTANT
    return constant*(1.0 + 1.0/delta)/p1


def divisionRoundLaw(p0, p1, maxRounds):
    """Probability that division returns 1 on round ``k`` for ``k < maxRounds``."""
    rounds = np.arange(maxRounds)
    return 0.5*p0*(1.0 - 0.5*p1)**rounds
