"""Counter-based random substreams.

Every draw in a run comes from a Philox generator whose key is the master
seed and whose counter encodes ``(agent, episode, step, purpose)``.  Streams
for one agent therefore never depend on how many other agents exist or on
the order in which agents are scheduled.
"""

from __future__ import annotations

import numpy as np

# purpose tags
EXPLORE = 1
ENV = 2
ENV_BUILD = 3
MISSPEC = 4

_MASK64 = (1 << 64) - 1


def substream(seed: int, agent: int = 0, episode: int = 0, step: int = 0,
              purpose: int = 0) -> np.random.Generator:
    # Philox advances the counter by one each block, so the low word is
    # shifted to keep neighbouring (agent, episode, step) streams disjoint.
    counter = [(step << 40) & _MASK64, episode & _MASK64, agent & _MASK64, purpose & _MASK64]
    return np.random.Generator(np.random.Philox(key=seed & _MASK64, counter=counter))
