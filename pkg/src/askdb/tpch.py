"""Deterministic tiny TPC-H-style dataset (8 core tables, a few thousand
rows) generated at build time for tests, demos and the bundled gold suites.

Same seed, same bytes: every value comes from one seeded RNG and the CSV
writers are order-stable.
"""

from __future__ import annotations

import csv
import random
from datetime import date, timedelta
from importlib import resources
from pathlib import Path

from .connect import Connection, ConnectionSpec, TableRef

REGIONS = ["AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST"]

# (nation name, region key), the canonical 25 nations
NATIONS = [
    ("ALGERIA", 0), ("ARGENTINA", 1), ("BRAZIL", 1), ("CANADA", 1),
    ("EGYPT", 4), ("ETHIOPIA", 0), ("FRANCE", 3), ("GERMANY", 3),
    ("INDIA", 2), ("INDONESIA", 2), ("IRAN", 4), ("IRAQ", 4),
    ("JAPAN", 2), ("JORDAN", 4), ("KENYA", 0), ("MOROCCO", 0),
    ("MOZAMBIQUE", 0), ("PERU", 1), ("CHINA", 2), ("ROMANIA", 3),
    ("SAUDI ARABIA", 4), ("VIETNAM", 2), ("RUSSIA", 3),
    ("UNITED KINGDOM", 3), ("UNITED STATES", 1),
]

SEGMENTS = ["AUTOMOBILE", "BUILDING", "FURNITURE", "MACHINERY", "HOUSEHOLD"]
PRIORITIES = ["1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"]
SHIP_MODES = ["REG AIR", "AIR", "RAIL", "SHIP", "TRUCK", "MAIL", "FOB"]
SHIP_INSTRUCT = ["DELIVER IN PERSON", "COLLECT COD", "NONE", "TAKE BACK RETURN"]
ORDER_STATUS = ["F", "O", "P"]
RETURN_FLAGS = ["R", "A", "N"]
LINE_STATUS = ["O", "F"]
CONTAINERS = [f"{a} {b}" for a in ("SM", "MED", "LG", "JUMBO", "WRAP") for b in ("CASE", "BOX", "BAG", "PKG")]
TYPES = [
    f"{a} {b} {c}"
    for a in ("STANDARD", "SMALL", "MEDIUM", "LARGE", "ECONOMY", "PROMO")
    for b in ("ANODIZED", "BURNISHED", "PLATED", "POLISHED")
    for c in ("TIN", "NICKEL", "BRASS", "STEEL", "COPPER")
]
PART_WORDS = [
    "almond", "antique", "aquamarine", "azure", "beige", "bisque", "black",
    "blanched", "blue", "blush", "brown", "burlywood", "burnished", "chartreuse",
    "chiffon", "chocolate", "coral", "cornflower", "cream", "cyan",
]

_COMMENT_WORDS = [
    "carefully", "quickly", "furiously", "slyly", "blithely", "boldly",
    "theodolites", "packages", "pinto beans", "foxes", "ideas", "pearls",
    "platelets", "sentiments", "asymptotes", "warthogs", "gravel", "maple",
    "lantern", "meadow",
]

N_SUPPLIERS = 30
N_CUSTOMERS = 300
N_PARTS = 200
N_ORDERS = 1500
MAX_LINES = 5

TABLES = ["customer", "lineitem", "nation", "orders", "part", "partsupp", "region", "supplier"]


def _comment_pool(rng: random.Random, n: int = 40) -> list[str]:
    pool = []
    for _ in range(n):
        pool.append(" ".join(rng.choice(_COMMENT_WORDS) for _ in range(3)))
    return pool


def _phone(rng: random.Random, nationkey: int) -> str:
    return f"{nationkey + 10}-{rng.randint(100, 999)}-{rng.randint(100, 999)}-{rng.randint(1000, 9999)}"


def _address(rng: random.Random) -> str:
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ,"
    return "".join(rng.choice(letters) for _ in range(rng.randint(12, 30))).strip()


def _money(rng: random.Random, lo: float, hi: float) -> float:
    return round(rng.uniform(lo, hi), 2)


def generate_tables(seed: int = 7) -> dict[str, tuple[list[str], list[list]]]:
    """All eight tables as (header, rows); deterministic for a fixed seed."""
    rng = random.Random(seed)
    pool = _comment_pool(rng)
    out: dict[str, tuple[list[str], list[list]]] = {}

    out["region"] = (
        ["r_regionkey", "r_name", "r_comment"],
        [[i, name, pool[i % len(pool)]] for i, name in enumerate(REGIONS)],
    )

    out["nation"] = (
        ["n_nationkey", "n_name", "n_regionkey", "n_comment"],
        [[i, name, region, rng.choice(pool)] for i, (name, region) in enumerate(NATIONS)],
    )

    suppliers = []
    for k in range(1, N_SUPPLIERS + 1):
        nation = rng.randrange(len(NATIONS))
        suppliers.append(
            [
                k,
                f"Supplier#{k:09d}",
                _address(rng),
                nation,
                _phone(rng, nation),
                _money(rng, -999.99, 9999.99),
                rng.choice(pool),
            ]
        )
    out["supplier"] = (
        ["s_suppkey", "s_name", "s_address", "s_nationkey", "s_phone", "s_acctbal", "s_comment"],
        suppliers,
    )

    customers = []
    for k in range(1, N_CUSTOMERS + 1):
        nation = rng.randrange(len(NATIONS))
        customers.append(
            [
                k,
                f"Customer#{k:09d}",
                _address(rng),
                nation,
                _phone(rng, nation),
                _money(rng, -999.99, 9999.99),
                rng.choice(SEGMENTS),
                rng.choice(pool),
            ]
        )
    out["customer"] = (
        ["c_custkey", "c_name", "c_address", "c_nationkey", "c_phone", "c_acctbal", "c_mktsegment", "c_comment"],
        customers,
    )

    parts = []
    for k in range(1, N_PARTS + 1):
        parts.append(
            [
                k,
                " ".join(rng.sample(PART_WORDS, 3)),
                f"Manufacturer#{rng.randint(1, 5)}",
                f"Brand#{rng.randint(1, 5)}{rng.randint(1, 5)}",
                rng.choice(TYPES),
                rng.randint(1, 50),
                rng.choice(CONTAINERS),
                round(900 + (k % 200) + rng.uniform(0, 99), 2),
                rng.choice(pool),
            ]
        )
    out["part"] = (
        ["p_partkey", "p_name", "p_mfgr", "p_brand", "p_type", "p_size", "p_container", "p_retailprice", "p_comment"],
        parts,
    )

    partsupps = []
    for p in range(1, N_PARTS + 1):
        for i in range(4):
            supp = ((p + i * (N_SUPPLIERS // 4)) % N_SUPPLIERS) + 1
            partsupps.append(
                [p, supp, rng.randint(1, 9999), _money(rng, 1.0, 1000.0), rng.choice(pool)]
            )
    out["partsupp"] = (
        ["ps_partkey", "ps_suppkey", "ps_availqty", "ps_supplycost", "ps_comment"],
        partsupps,
    )

    start = date(1992, 1, 1)
    span = (date(1998, 8, 2) - start).days
    orders = []
    lineitems = []
    for o in range(1, N_ORDERS + 1):
        custkey = rng.randint(1, N_CUSTOMERS)
        orderdate = start + timedelta(days=rng.randrange(span))
        n_lines = rng.randint(1, MAX_LINES)
        total = 0.0
        lines = []
        for ln in range(1, n_lines + 1):
            partkey = rng.randint(1, N_PARTS)
            suppkey = rng.randint(1, N_SUPPLIERS)
            qty = rng.randint(1, 50)
            extended = round(qty * (900 + partkey % 200 + 50) / 10.0, 2)
            discount = round(rng.randint(0, 10) / 100.0, 2)
            tax = round(rng.randint(0, 8) / 100.0, 2)
            shipdate = orderdate + timedelta(days=rng.randint(1, 121))
            commitdate = orderdate + timedelta(days=rng.randint(30, 90))
            receiptdate = shipdate + timedelta(days=rng.randint(1, 30))
            total += extended * (1 - discount) * (1 + tax)
            lines.append(
                [
                    o, partkey, suppkey, ln, qty, extended, discount, tax,
                    rng.choice(RETURN_FLAGS), rng.choice(LINE_STATUS),
                    shipdate.isoformat(), commitdate.isoformat(), receiptdate.isoformat(),
                    rng.choice(SHIP_INSTRUCT), rng.choice(SHIP_MODES), rng.choice(pool),
                ]
            )
        orders.append(
            [
                o, custkey, rng.choice(ORDER_STATUS), round(total, 2),
                orderdate.isoformat(), rng.choice(PRIORITIES),
                f"Clerk#{rng.randint(1, 20):09d}", 0, rng.choice(pool),
            ]
        )
        lineitems.extend(lines)
    out["orders"] = (
        ["o_orderkey", "o_custkey", "o_orderstatus", "o_totalprice", "o_orderdate",
         "o_orderpriority", "o_clerk", "o_shippriority", "o_comment"],
        orders,
    )
    out["lineitem"] = (
        ["l_orderkey", "l_partkey", "l_suppkey", "l_linenumber", "l_quantity",
         "l_extendedprice", "l_discount", "l_tax", "l_returnflag", "l_linestatus",
         "l_shipdate", "l_commitdate", "l_receiptdate", "l_shipinstruct", "l_shipmode", "l_comment"],
        lineitems,
    )
    return out


def generate_csvs(outdir: str | Path, seed: int = 7) -> dict[str, Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for table, (header, rows) in generate_tables(seed).items():
        path = outdir / f"{table}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        paths[table] = path
    return paths


def create_database(db_path: str | Path, seed: int = 7, connection_id: str = "tpch") -> Connection:
    """Generate the dataset straight into an embedded store."""
    db_path = Path(db_path)
    spec = ConnectionSpec(id=connection_id, dialect="embedded", location=str(db_path))
    conn = Connection(spec)
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        for table, path in generate_csvs(tmp, seed).items():
            conn.ingest_csv(path, TableRef(connection_id, table))
    return conn


def gold_joins_text() -> str:
    return resources.files("askdb.data.tpch").joinpath("gold_joins.txt").read_text("utf-8")


def gold_retrieval_text() -> str:
    return resources.files("askdb.data.tpch").joinpath("gold_retrieval.tsv").read_text("utf-8")


def gold_e2e_text() -> str:
    return resources.files("askdb.data.tpch").joinpath("gold_e2e.txt").read_text("utf-8")
