"""Generators shared by the unit and acceptance suites."""

import numpy as np
import pandas as pd


def audit_table(n=400, seed=0, target_on=("family_relation",)):
    """Binary person features; the target (0 = linked) depends only on ``target_on``."""
    gen = np.random.default_rng(seed)
    cols = ["family_relation", "organization", "residence", "city_of_birth",
            "date_of_birth", "city_of_death", "gender", "religion"]
    df = pd.DataFrame(gen.integers(0, 2, (n, len(cols))), columns=cols)
    linked = df[list(target_on)].any(axis=1)
    return df, np.where(linked, 0, 1)
