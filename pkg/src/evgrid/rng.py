"""MT19937 pseudorandom generator (32-bit, reference initialization).

Pure Python so that the output stream is identical on every platform and
independent of any library's seeding conventions.
"""

N, M = 624, 397
MATRIX_A = 0x9908B0DF
UPPER_MASK = 0x80000000
LOWER_MASK = 0x7FFFFFFF
MASK32 = 0xFFFFFFFF

GOLDEN = 0x9E3779B9


class MT19937:
    """Mersenne Twister seeded with ``init_genrand``.

    The state is twisted one word at a time as outputs are requested, which
    yields exactly the reference stream while keeping construction cheap.
    """

    __slots__ = ("seed", "_mt", "_index")

    def __init__(self, seed=5489):
        if not 0 <= seed <= MASK32:
            raise ValueError(f"seed must be a 32-bit unsigned integer, got {seed}")
        self.seed = seed
        mt = [0] * N
        mt[0] = seed
        prev = seed
        for i in range(1, N):
            prev = (1812433253 * (prev ^ (prev >> 30)) + i) & MASK32
            mt[i] = prev
        self._mt = mt
        self._index = 0

    def next_u32(self):
        mt = self._mt
        i = self._index
        y = (mt[i] & UPPER_MASK) | (mt[(i + 1) % N] & LOWER_MASK)
        word = mt[(i + M) % N] ^ (y >> 1)
        if y & 1:
            word ^= MATRIX_A
        mt[i] = word
        self._index = (i + 1) % N

        word ^= word >> 11
        word ^= (word << 7) & 0x9D2C5680
        word ^= (word << 15) & 0xEFC60000
        word ^= word >> 18
        return word

    def next_f64(self):
        """Uniform real in [0, 1) with 32-bit resolution."""
        return self.next_u32() / 4294967296.0

    def clone(self):
        other = object.__new__(MT19937)
        other.seed = self.seed
        other._mt = list(self._mt)
        other._index = self._index
        return other


def scenario_seed(base_seed, k):
    """Seed of the k-th scenario in a sweep; independent of execution order."""
    return (base_seed + GOLDEN * k) & MASK32
