import threading
from pathlib import Path
from typing import Callable, Sequence, Union

from sqlalchemy import create_engine

from mats_sql.backend.base import GenerationRequest, GenerationResult, prompt_digest
from mats_sql.errors import FixtureMissError

Responder = Union[str, Sequence[str], Callable[[GenerationRequest], Sequence[str]]]

SINGER_DB = [
    "CREATE TABLE singer (singer_id INTEGER PRIMARY KEY, name TEXT, "
    "country TEXT, age INTEGER)",
    "CREATE TABLE concert (concert_id INTEGER PRIMARY KEY, concert_name TEXT, "
    "singer_id INTEGER REFERENCES singer(singer_id), year INTEGER)",
    "INSERT INTO singer VALUES (1, 'Joe Sharp', 'Netherlands', 52), "
    "(2, 'Timbaland', 'United States', 32), (3, 'Justin Brown', 'France', 29), "
    "(4, 'Rose White', 'France', 41)",
    "INSERT INTO concert VALUES (1, 'Auditions', 1, 2014), "
    "(2, 'Super bootcamp', 2, 2014), (3, 'Home Visits', 3, 2015)",
]

FRANCE_COUNT = "SELECT count(*) FROM singer WHERE country = 'France'"
OLDEST = "SELECT name FROM singer ORDER BY age DESC LIMIT 1"
YOUNGEST = "SELECT name FROM singer ORDER BY age LIMIT 1"
SINGERS_2014 = (
    "SELECT T1.name FROM singer AS T1 JOIN concert AS T2 "
    "ON T1.singer_id = T2.singer_id WHERE T2.year = 2014"
)
TIMBALAND_COUNTRY = "SELECT country FROM singer WHERE name = 'Timbaland'"

SAMPLES = [
    {
        "question_id": 0,
        "db_id": "concert_singer",
        "question": "How many singers are from France?",
        "evidence": "",
        "SQL": FRANCE_COUNT,
        "difficulty": "simple",
    },
    {
        "question_id": 1,
        "db_id": "concert_singer",
        "question": "What is the name of the oldest singer?",
        "evidence": "",
        "SQL": OLDEST,
        "difficulty": "simple",
    },
    {
        "question_id": 2,
        "db_id": "concert_singer",
        "question": "List the names of singers who performed in 2014.",
        "evidence": "",
        "SQL": SINGERS_2014,
        "difficulty": "moderate",
    },
    {
        "question_id": 3,
        "db_id": "concert_singer",
        "question": "Which country is Timbaland from?",
        "evidence": "Timbaland refers to name = 'Timbaland'",
        "SQL": TIMBALAND_COUNTRY,
        "difficulty": "simple",
    },
    {
        "question_id": 4,
        "db_id": "concert_singer",
        "question": "What is the average age of singers from France?",
        "evidence": "",
        "SQL": "SELECT avg(age) FROM singer WHERE country = 'France'",
        "difficulty": "challenging",
    },
]


def create_db(path: Path, statements: Sequence[str]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    engine = create_engine(f"sqlite:///{path}")
    with engine.begin() as connection:
        for statement in statements:
            connection.exec_driver_sql(statement)
    engine.dispose()
    return path


def fenced(sql: str, plan: str = "Plan: read the singer table.") -> str:
    return f"{plan}\n```sql\n{sql}\n```"


def cycled(texts: Sequence[str], n: int) -> list[str]:
    return [texts[i % len(texts)] for i in range(n)]


class RuleBackend:
    """Answers a request with the responder of the first marker found in its prompt."""

    def __init__(self, rules: dict[str, Responder], name: str = "rule") -> None:
        self.name = name
        self.rules = rules
        self.requests: list[GenerationRequest] = []
        self._lock = threading.Lock()

    def generate(self, request: GenerationRequest) -> GenerationResult:
        with self._lock:
            self.requests.append(request)
        for marker, responder in self.rules.items():
            if marker not in request.prompt:
                continue
            if callable(responder):
                texts = list(responder(request))
            elif isinstance(responder, str):
                texts = [responder] * request.n
            else:
                texts = cycled(list(responder), request.n)
            return GenerationResult(completions=tuple(texts))
        raise FixtureMissError(prompt_digest(request.prompt))

    @property
    def call_count(self) -> int:
        return len(self.requests)
