from dataclasses import dataclass

import pytest

from kgqa.edge_scorer import ScorerConfig
from kgqa.embeddings import StubTextEmbedder, TransEConfig, train_transe
from kgqa.kg_store import load_kb
from kgqa.pipeline import make_dataset, train_scorer
from kgqa.scorer_training import TrainConfig
from kgqa.synthetic import build_movie_world, generate_questions, split_questions

TOY_KB = b"""Inception|directed_by|Christopher Nolan
Inception|has_genre|Science Fiction
Interstellar|directed_by|Christopher Nolan
Interstellar|has_genre|Science Fiction
Interstellar|has_genre|Drama
Memento|directed_by|Christopher Nolan
Memento|has_genre|Thriller
Memento|starred_actors|Guy Pearce
Prometheus|starred_actors|Guy Pearce
Prometheus|directed_by|Ridley Scott
"""

# desk-scale scorer used by the neural tests and the acceptance suite
DESK_SCORER = dict(text_dim=64, graph_dim=32, latent_dim=64, attention_hidden=128, classifier_hidden=(64, 32))
DESK_TRAIN = dict(batch_size=64)


@pytest.fixture
def toy_graph():
    return load_kb(TOY_KB)


@dataclass
class DeskSetup:
    world: object
    graph: object
    splits: dict
    provider: object
    table: object
    dataset: object
    cfg: ScorerConfig
    tcfg: TrainConfig


def make_desk_setup(seed: int = 0, per_template: int = 40, hops=(1, 2)) -> DeskSetup:
    world = build_movie_world(seed)
    splits = split_questions(generate_questions(world, per_template, hops=hops, seed=seed), seed=seed)
    provider = StubTextEmbedder(DESK_SCORER["text_dim"], seed=seed)
    table = train_transe(world.graph, TransEConfig(dim=DESK_SCORER["graph_dim"], epochs=100, seed=seed))
    ds = make_dataset(world.graph, splits["train"], splits["dev"], provider, table, seed=seed)
    return DeskSetup(world, world.graph, splits, provider, table, ds, ScorerConfig(seed=seed, **DESK_SCORER), TrainConfig(seed=seed, **DESK_TRAIN))


@pytest.fixture(scope="session")
def desk_setup():
    return make_desk_setup()


@pytest.fixture(scope="session")
def desk_trained(desk_setup):
    return train_scorer(desk_setup.dataset, desk_setup.cfg, desk_setup.tcfg)


def pytest_configure(config):
    config._criteria = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when not in ("setup", "call"):
        return
    n = marker.args[0]
    detail = dict(item.user_properties).get("detail", "")
    if call.when == "setup" and call.excinfo is not None:
        outcome = "SKIP" if call.excinfo.errisinstance(pytest.skip.Exception) else "ERROR"
    elif call.when == "call":
        outcome = "PASS" if call.excinfo is None else ("SKIP" if call.excinfo.errisinstance(pytest.skip.Exception) else "FAIL")
    else:
        return
    item.config._criteria.setdefault(n, []).append((item.name, outcome, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    crit = getattr(config, "_criteria", {})
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(crit):
        for name, outcome, detail in crit[n]:
            terminalreporter.write_line(f"criterion {n:>2} {outcome:<5} {name}" + (f"  [{detail}]" if detail else ""))
