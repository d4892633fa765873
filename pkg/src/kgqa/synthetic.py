"""Small movie-domain graph and templated multi-hop questions for desk-scale runs."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bfs_executor import execute_plan
from .evaluation import QuestionInstance
from .kg_store import KnowledgeGraph

RELATIONS = ("directed_by", "written_by", "starred_actors", "has_genre", "release_year")
GENRES = ("Drama", "Comedy", "Thriller", "Horror", "Western", "Romance", "Animation", "Documentary")

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "kr", "st", "tr", "sh")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ou", "ea")


@dataclass(frozen=True)
class Template:
    name: str
    seed_type: str  # movie | director | writer | actor
    relations: tuple[str, ...]
    phrasings: tuple[str, ...]  # "{e}" marks the bracketed entity

    @property
    def hops(self) -> int:
        return len(self.relations)


TEMPLATES: tuple[Template, ...] = (
    Template("movie_to_director", "movie", ("directed_by",), ("who directed [{e}]", "who is the director of [{e}]", "[{e}] was directed by who")),
    Template("movie_to_writer", "movie", ("written_by",), ("who wrote [{e}]", "who is the writer of [{e}]", "[{e}] was written by who")),
    Template("movie_to_actor", "movie", ("starred_actors",), ("who starred in [{e}]", "which actors acted in [{e}]", "who are the actors in [{e}]")),
    Template("movie_to_genre", "movie", ("has_genre",), ("what genre is [{e}]", "what type of film is [{e}]", "[{e}] belongs to which genre")),
    Template("movie_to_year", "movie", ("release_year",), ("when was [{e}] released", "what year did [{e}] come out", "release year of [{e}]")),
    Template("director_to_movie", "director", ("directed_by_reverse",), ("what films did [{e}] direct", "which movies were directed by [{e}]")),
    Template("actor_to_movie", "actor", ("starred_actors_reverse",), ("what films did [{e}] act in", "which movies starred [{e}]")),
    Template("writer_to_movie", "writer", ("written_by_reverse",), ("what films did [{e}] write", "which movies were written by [{e}]")),
    Template("movie_to_director_to_movie", "movie", ("directed_by", "directed_by_reverse"), ("which movies share the director of [{e}]", "what other films were directed by the director of [{e}]")),
    Template("actor_to_movie_to_genre", "actor", ("starred_actors_reverse", "has_genre"), ("what genres are the films [{e}] acted in", "which genres do the movies starring [{e}] belong to")),
    Template("director_to_movie_to_actor", "director", ("directed_by_reverse", "starred_actors"), ("who acted in the movies directed by [{e}]", "which actors starred in films directed by [{e}]")),
    Template("writer_to_movie_to_year", "writer", ("written_by_reverse", "release_year"), ("when were the movies written by [{e}] released", "what years did the films written by [{e}] come out")),
    Template("actor_to_movie_to_director", "actor", ("starred_actors_reverse", "directed_by"), ("who directed the films [{e}] acted in", "who are the directors of movies starring [{e}]")),
    Template("movie_to_actor_to_movie", "movie", ("starred_actors", "starred_actors_reverse"), ("which movies share actors with [{e}]", "what other films have the actors of [{e}]")),
    Template(
        "movie_to_director_to_movie_to_genre",
        "movie",
        ("directed_by", "directed_by_reverse", "has_genre"),
        ("what genres are the films directed by the director of [{e}]", "which genres do movies by the director of [{e}] belong to"),
    ),
    Template(
        "movie_to_writer_to_movie_to_actor",
        "movie",
        ("written_by", "written_by_reverse", "starred_actors"),
        ("who acted in films written by the writer of [{e}]", "which actors starred in movies by the writer of [{e}]"),
    ),
    Template(
        "actor_to_movie_to_director_to_movie",
        "actor",
        ("starred_actors_reverse", "directed_by", "directed_by_reverse"),
        ("which films were directed by the directors of movies starring [{e}]", "what movies did the directors of films with [{e}] make"),
    ),
    Template(
        "director_to_movie_to_actor_to_movie",
        "director",
        ("directed_by_reverse", "starred_actors", "starred_actors_reverse"),
        ("what other films star the actors of movies directed by [{e}]", "which movies feature actors from films directed by [{e}]"),
    ),
)


@dataclass
class MovieWorld:
    graph: KnowledgeGraph
    triples: list[tuple[str, str, str]]
    entities_by_type: dict[str, list[str]]

    def kb_text(self) -> str:
        return "".join(f"{h}|{r}|{t}\n" for h, r, t in self.triples)

    def write_kb(self, path: str | Path) -> None:
        Path(path).write_text(self.kb_text(), encoding="utf-8")


def _names(rng: np.random.Generator, n: int, words: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        parts = []
        for _ in range(words):
            syl = int(rng.integers(2, 4))
            w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(syl))
            parts.append(w.capitalize())
        name = " ".join(parts)
        if name not in taken:
            taken.add(name)
            out.append(name)
    return out


def build_movie_world(
    seed: int = 0,
    n_movies: int = 70,
    n_people: int = 110,
    n_years: int = 12,
    actors_per_movie: tuple[int, int] = (2, 4),
) -> MovieWorld:
    """Movies linked to people (as director, writer or actor), genres and years.

    People share one pool, so a person may direct one film and act in another;
    the defaults give roughly 200 entities.
    """
    rng = np.random.default_rng(seed)
    taken: set[str] = set(GENRES)
    movies = _names(rng, n_movies, 2, taken)
    people = _names(rng, n_people, 2, taken)
    years = [str(1990 + i) for i in range(n_years)]
    triples = []
    for m in movies:
        triples.append((m, "directed_by", people[rng.integers(n_people)]))
        triples.append((m, "written_by", people[rng.integers(n_people)]))
        n_act = int(rng.integers(actors_per_movie[0], actors_per_movie[1] + 1))
        for a in rng.choice(n_people, size=n_act, replace=False):
            triples.append((m, "starred_actors", people[a]))
        for gi in rng.choice(len(GENRES), size=int(rng.integers(1, 3)), replace=False):
            triples.append((m, "has_genre", GENRES[gi]))
        triples.append((m, "release_year", years[rng.integers(n_years)]))
    g = KnowledgeGraph.from_triples(triples)
    role = {"directed_by": "director", "written_by": "writer", "starred_actors": "actor"}
    by_type: dict[str, list[str]] = {"movie": movies, "director": [], "writer": [], "actor": []}
    for _, r, t in triples:
        if r in role and t not in by_type[role[r]]:
            by_type[role[r]].append(t)
    for k in ("director", "writer", "actor"):
        by_type[k].sort()
    return MovieWorld(g, triples, by_type)


def generate_questions(
    world: MovieWorld,
    per_template: int = 20,
    hops: Sequence[int] = (1, 2, 3),
    seed: int = 0,
    split: str = "train",
    templates: Sequence[Template] = TEMPLATES,
) -> list[QuestionInstance]:
    """Sample seeds per template and answer them by executing the template's relation chain.

    The seed entity itself is dropped from its answer set; questions left with
    no answers are not emitted.
    """
    rng = np.random.default_rng(seed)
    g = world.graph
    out: list[QuestionInstance] = []
    for tpl in templates:
        if tpl.hops not in hops:
            continue
        pool = world.entities_by_type[tpl.seed_type]
        picks = rng.choice(len(pool), size=min(per_template, len(pool)), replace=False)
        plan = [[g.relation_id(r)] for r in tpl.relations]
        for j, pi in enumerate(sorted(picks.tolist())):
            name = pool[pi]
            sid = g.entity_id(name)
            ans, _ = execute_plan(g, [sid], plan)
            gold = tuple(a for a in ans.surfaces if a != name)
            if not gold:
                continue
            text = tpl.phrasings[int(rng.integers(len(tpl.phrasings)))].format(e=name)
            out.append(QuestionInstance(f"{split}-{tpl.hops}hop-{tpl.name}-{j:04d}", text, gold, tpl.hops, split, tpl.name, tpl.relations))
    return out


def split_questions(questions: Sequence[QuestionInstance], fractions=(0.6, 0.2, 0.2), seed: int = 0) -> dict[str, list[QuestionInstance]]:
    """Question-level train/dev/test split, relabelling ``split`` and ids."""
    order = np.random.default_rng(seed).permutation(len(questions))
    n_tr = int(round(fractions[0] * len(questions)))
    n_dev = int(round(fractions[1] * len(questions)))
    parts = {"train": order[:n_tr], "dev": order[n_tr : n_tr + n_dev], "test": order[n_tr + n_dev :]}
    out = {}
    for name, idx in parts.items():
        qs = [questions[i] for i in sorted(idx.tolist())]
        out[name] = [QuestionInstance(q.id.replace(q.split, name, 1), q.text, q.gold_answers, q.hop_count, name, q.template, q.relations) for q in qs]
    return out


def to_metaqa_lines(questions: Sequence[QuestionInstance]) -> str:
    return "".join(f"{q.text}\t{'|'.join(q.gold_answers)}\n" for q in questions)
