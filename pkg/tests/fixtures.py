"""Test fixtures shared across suites: the example pipeline and its data."""

import json

from planforge.scaffold import MANIFEST, TRANSACTIONS_ROWS, transactions_table

FIG1_MANIFEST = json.dumps(MANIFEST)

# independent row-wise oracle for the example pipeline, computed by hand:
# rows 1 (IT, 10.0) and 2 (FR, 5.0) fall inside the date window and the
# euro country set; summing usd per country gives FR=5.0, IT=10.0
EXPECTED_USD_BY_COUNTRY = {"country": ["FR", "IT"], "usd_total": [5.0, 10.0]}


def usd_by_country_oracle(rows=None, date_lo="2023-01-01", date_hi="2023-02-01",
                          euro=("IT", "FR", "DE", "ES")):
    """Row-wise filter + sum oracle over the fixture rows."""
    import datetime
    rows = rows if rows is not None else TRANSACTIONS_ROWS
    lo = datetime.date.fromisoformat(date_lo)
    hi = datetime.date.fromisoformat(date_hi)
    sums = {}
    for i in range(len(rows["id"])):
        when = datetime.date.fromisoformat(rows["eventTime"][i])
        if not (lo <= when <= hi):
            continue
        if rows["country"][i] not in euro:
            continue
        sums.setdefault(rows["country"][i], 0.0)
        sums[rows["country"][i]] += rows["usd"][i]
    countries = sorted(sums)
    return {"country": countries, "usd_total": [sums[c] for c in countries]}


__all__ = ["FIG1_MANIFEST", "EXPECTED_USD_BY_COUNTRY", "transactions_table",
           "usd_by_country_oracle"]
