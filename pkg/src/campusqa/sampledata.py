"""Deterministic synthetic corpus for demos, tests, and benchmarks.

The generated data describes a fictional university. Row content is a
pure function of the seed and row index, so benchmark fixtures can
modify an exact fraction of rows between runs.
"""
from __future__ import annotations

import csv
import io
import random
from pathlib import Path

_DEPARTMENTS = [
    "computer science", "mathematics", "physics", "economics", "architecture",
    "pharmacy", "english", "biotechnology", "law", "business",
]
_TOPICS = [
    ("advising", "When does {dept} advising open", "Advising for {dept} students opens in week {n} of the semester and runs through the add drop period."),
    ("credits", "How many credits does the {dept} program require", "The {dept} program requires {m} credits including general education and capstone work."),
    ("labs", "Where are the {dept} labs located", "The {dept} labs are on floor {n} of building {b} and stay open until {h} pm on weekdays."),
    ("office", "How do I meet a {dept} faculty member", "Faculty in {dept} hold office hours twice a week; book a slot {n} days ahead through the student portal."),
    ("exams", "How are {dept} final exams scheduled", "Final exams for {dept} run in week {m} and the schedule is published {n} weeks before the exam period."),
    ("internship", "What are the internship rules for {dept}", "Students in {dept} may start internships after earning {m} credits and must register the placement within {n} days."),
    ("scholarship", "What scholarship options exist for {dept} students", "Merit scholarships for {dept} cover up to {m} percent of tuition and require a {g} grade average."),
    ("library", "Which library resources support {dept} courses", "The library reserves {n} copies of each required {dept} textbook and provides access to {m} online journals."),
    ("clubs", "Are there student clubs for {dept}", "The {dept} society meets every {d} in room {b}{n} and welcomes students from any semester."),
    ("transfer", "Can I transfer credits into the {dept} program", "Up to {m} transfer credits are accepted into {dept} subject to a course-by-course review taking {n} weeks."),
]
_BUILDINGS = ["UB1", "UB2", "UB4", "TARC", "ANNEX"]
_DAYS = ["sunday", "monday", "tuesday", "wednesday", "thursday"]


def qa_rows(n: int = 500, seed: int = 7, modified: bool = False) -> list[dict[str, str]]:
    """``n`` question/answer rows; ``modified`` rewrites every 10th answer."""
    rows = []
    for i in range(n):
        rng = random.Random(seed * 1_000_003 + i)
        category, q_tpl, a_tpl = _TOPICS[i % len(_TOPICS)]
        values = {
            "dept": _DEPARTMENTS[rng.randrange(len(_DEPARTMENTS))],
            "n": rng.randrange(1, 9),
            "m": rng.randrange(12, 140),
            "b": rng.choice(_BUILDINGS),
            "h": rng.randrange(6, 11),
            "g": rng.choice(["3.2", "3.5", "3.7"]),
            "d": rng.choice(_DAYS),
        }
        question = q_tpl.format(**values) + f" (case {i})?"
        answer = a_tpl.format(**values)
        if modified and i % 10 == 0:
            answer += " Note: this policy was revised for the current term."
        rows.append(
            {
                "id": str(i),
                "category": category,
                "question": question,
                "answer": answer,
            }
        )
    return rows


def _to_csv_bytes(rows: list[dict[str, str]]) -> bytes:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


def qa_csv_bytes(n: int = 500, seed: int = 7, modified: bool = False) -> bytes:
    return _to_csv_bytes(qa_rows(n=n, seed=seed, modified=modified))


PREREQUISITE_ROWS = [
    {"Course": "CSE111", "Pre-Requisite": "CSE110 (HP)", "Full Chain": "CSE111--CSE110"},
    {"Course": "CSE220", "Pre-Requisite": "CSE111 (HP), CSE230 (HP)", "Full Chain": "CSE230--CSE111--CSE110"},
    {"Course": "CSE221", "Pre-Requisite": "CSE220 (HP)", "Full Chain": "CSE220--CSE111--CSE110"},
    {"Course": "CSE250", "Pre-Requisite": "PHY112 (SP)", "Full Chain": "None"},
    {"Course": "CSE251", "Pre-Requisite": "CSE250 (HP)", "Full Chain": "CSE250"},
    {"Course": "CSE260", "Pre-Requisite": "CSE251 (HP)", "Full Chain": "CSE251--CSE250"},
    {"Course": "CSE310", "Pre-Requisite": "CSE370 (HP)", "Full Chain": "CSE370--CSE221--CSE220--CSE111--CSE110"},
    {"Course": "CSE321", "Pre-Requisite": "CSE221 (HP)", "Full Chain": "CSE221--CSE220--CSE111--CSE110"},
    {"Course": "CSE330", "Pre-Requisite": "MAT216 (HP)", "Full Chain": "MAT120--MAT110"},
    {"Course": "CSE331", "Pre-Requisite": "CSE221 (HP)", "Full Chain": "CSE221--CSE220--CSE111--CSE110"},
]

FACULTY_ROWS = [
    {"Initial": "ABC", "Name": "Ayesha B. Chowdhury", "Designation": "Professor", "Status": "Full time", "Room": "UB41203", "Email": "ayesha.chowdhury@example.edu"},
    {"Initial": "MRT", "Name": "Mahmud R. Talukder", "Designation": "Associate Professor", "Status": "Full time", "Room": "UB41105", "Email": "mahmud.talukder@example.edu"},
    {"Initial": "SNK", "Name": "Sadia N. Karim", "Designation": "Assistant Professor", "Status": "Full time", "Room": "UB20904", "Email": "sadia.karim@example.edu"},
    {"Initial": "JDW", "Name": "Jonathan D. Wu", "Designation": "Senior Lecturer", "Status": "Full time", "Room": "UB20711", "Email": "jonathan.wu@example.edu"},
    {"Initial": "FRH", "Name": "Farhana R. Haque", "Designation": "Lecturer", "Status": "Part time", "Room": "ANNEX210", "Email": "farhana.haque@example.edu"},
    {"Initial": "TLM", "Name": "Tanvir L. Mahmood", "Designation": "Lecturer", "Status": "Full time", "Room": "UB20715", "Email": ""},
]


def prerequisites_csv_bytes() -> bytes:
    return _to_csv_bytes(PREREQUISITE_ROWS)


def faculty_csv_bytes() -> bytes:
    return _to_csv_bytes(FACULTY_ROWS)


# default synonym table for the hash embedder: campus vocabulary students
# phrase differently than the stored records do
DEFAULT_SYNONYMS = {
    "grading": "syn-grade", "marks": "syn-grade", "grades": "syn-grade",
    "professor": "syn-faculty", "lecturer": "syn-faculty", "teacher": "syn-faculty",
    "dorm": "syn-housing", "hostel": "syn-housing", "residence": "syn-housing",
    "fee": "syn-payment", "tuition": "syn-payment", "payment": "syn-payment",
}


def write_sample_corpus(directory: str | Path, qa_count: int = 500, seed: int = 7) -> list[Path]:
    """Write the bundled sample CSVs into a directory and return their paths."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    files = {
        "qa.csv": qa_csv_bytes(n=qa_count, seed=seed),
        "prerequisites.csv": prerequisites_csv_bytes(),
        "faculty.csv": faculty_csv_bytes(),
    }
    written = []
    for name, blob in files.items():
        path = root / name
        path.write_bytes(blob)
        written.append(path)
    return written
