import pytest

from kgrag.embedding import DeterministicEmbeddingProvider, embed_index

from helpers import make_index


@pytest.fixture
def provider():
    return DeterministicEmbeddingProvider(dimension=16)


@pytest.fixture
def path_index():
    # a --r1-- b --r2-- c, with one unit per entity
    return make_index(
        ["a", "b", "c"],
        edges=[("r1", "a", "b"), ("r2", "b", "c")],
        units=[
            ("u1", "passage about a", ["a"]),
            ("u2", "passage about b", ["b"]),
            ("u3", "passage about c", ["c"]),
        ],
    )


@pytest.fixture
def path_store(path_index, provider):
    return embed_index(provider, path_index)
