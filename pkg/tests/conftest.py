import numpy as np
import pytest
from hypothesis import strategies as st

from caml.env import ALL_PERMUTATIONS, EntityType

offsets = st.tuples(*[st.floats(-0.99, 0.99, allow_nan=False)] * 4)
entities = st.builds(
    lambda pid, offs: EntityType(id=0, latent_group=0, remap=ALL_PERMUTATIONS[pid], offsets=offs),
    st.integers(0, 23), offsets)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
