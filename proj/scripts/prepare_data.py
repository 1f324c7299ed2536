#!/usr/bin/env python3
# Copyright 2026 The flipaudit Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds the shipped CSV files under data/ from the public UCI releases.

The raw files are taken from PyPI wheels that bundle verbatim copies:
  * Adult:  responsibly==0.1.2  (responsibly/dataset/adult/adult.{data,test})
  * Credit: ethicml==1.3.0      (ethicml/data/csvs/UCI_Credit_Card.csv)

Usage: python3 scripts/prepare_data.py [--wheel-dir DIR] [--out DIR]
"""

import argparse
import csv
import io
import json
import pathlib
import subprocess
import sys
import zipfile

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education_num",
    "marital_status", "occupation", "relationship", "race", "sex",
    "capital_gain", "capital_loss", "hours_per_week", "native_country",
    "income",
]
ADULT_CATEGORICAL = ["workclass", "marital_status", "occupation",
                     "relationship", "race", "sex", "native_country"]


def fetch_wheel(name, version, wheel_dir):
    wheel_dir.mkdir(parents=True, exist_ok=True)
    found = list(wheel_dir.glob(f"{name}-{version}-*.whl"))
    if not found:
        subprocess.check_call([sys.executable, "-m", "pip", "download",
                               "--no-deps", f"{name}=={version}", "-d",
                               str(wheel_dir)])
        found = list(wheel_dir.glob(f"{name}-{version}-*.whl"))
    return zipfile.ZipFile(found[0])


def adult_rows(text):
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("|"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if "?" in cells:
            continue
        cells[-1] = cells[-1].rstrip(".")
        rows.append(cells)
    return rows


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def prepare_adult(wheel, out):
    train = adult_rows(wheel.read("responsibly/dataset/adult/adult.data")
                       .decode())
    test = adult_rows(wheel.read("responsibly/dataset/adult/adult.test")
                      .decode())
    # "education" duplicates education_num and is not used as a feature.
    keep = [i for i, c in enumerate(ADULT_COLUMNS) if c != "education"]
    header = [ADULT_COLUMNS[i] for i in keep]
    write_csv(out / "adult_train.csv", header,
              [[r[i] for i in keep] for r in train])
    write_csv(out / "adult_test.csv", header,
              [[r[i] for i in keep] for r in test])

    def levels(col):
        i = ADULT_COLUMNS.index(col)
        return sorted({r[i] for r in train})

    features = [
        {"name": "age", "kind": "continuous", "bounds": [17, 90],
         "scale_group": "years"},
        {"name": "workclass", "kind": "categorical",
         "levels": levels("workclass")},
        {"name": "fnlwgt", "kind": "continuous", "bounds": [0, 1500000]},
        {"name": "education_num", "kind": "continuous", "bounds": [1, 16],
         "integer": True, "scale_group": "years"},
        {"name": "marital_status", "kind": "categorical",
         "levels": levels("marital_status")},
        {"name": "occupation", "kind": "categorical",
         "levels": levels("occupation")},
        {"name": "relationship", "kind": "categorical",
         "levels": levels("relationship")},
        {"name": "race", "kind": "categorical", "levels": levels("race")},
        {"name": "sex", "kind": "categorical", "levels": levels("sex")},
        {"name": "capital_gain", "kind": "continuous", "bounds": [0, 99999],
         "scale_group": "dollars"},
        {"name": "capital_loss", "kind": "continuous", "bounds": [0, 4356],
         "scale_group": "dollars"},
        {"name": "hours_per_week", "kind": "continuous", "bounds": [1, 99]},
        {"name": "native_country", "kind": "categorical",
         "levels": levels("native_country")},
    ]
    schema = {
        "features": features,
        "label": {"name": "income", "classes": ["<=50K", ">50K"]},
    }
    (out / "adult.schema.json").write_text(json.dumps(schema, indent=2) + "\n")


EDUCATION = {1: "graduate_school", 2: "university", 3: "high_school"}


def prepare_credit(wheel, out):
    text = wheel.read("ethicml/data/csvs/UCI_Credit_Card.csv").decode()
    reader = csv.DictReader(io.StringIO(text))
    header = ["ID", "LIMIT_BAL", "SEX", "EDUCATION", "MARRIAGE", "AGE",
              "PAY_0", "PAY_2", "PAY_3", "PAY_4", "PAY_5", "PAY_6"]
    header += [f"BILL_AMT{i}" for i in range(1, 7)]
    header += [f"PAY_AMT{i}" for i in range(1, 7)]
    header += ["default"]
    rows = []
    for r in reader:
        edu = next(i for i in range(7) if r[f"EDUCATION_{i}"] == "1")
        mar = next(i for i in range(4) if r[f"MARRIAGE_{i}"] == "1")
        # The bundled copy recodes SEX so that 1 = female (UCI uses 2).
        row = [r["ID"], r["LIMIT_BAL"],
               "female" if r["SEX"] == "1" else "male",
               EDUCATION.get(edu, "other"),
               "married" if mar == 1 else "not_married",
               r["AGE"]]
        row += [r[c] for c in header[6:-1]]
        row += [r["default-payment-next-month"]]
        rows.append(row)
    write_csv(out / "credit.csv", header, rows)

    features = [
        {"name": "LIMIT_BAL", "kind": "continuous", "bounds": [0, None]},
        {"name": "SEX", "kind": "categorical", "levels": ["female", "male"]},
        {"name": "EDUCATION", "kind": "categorical",
         "levels": ["graduate_school", "university", "high_school", "other"]},
        {"name": "MARRIAGE", "kind": "categorical",
         "levels": ["married", "not_married"]},
        {"name": "AGE", "kind": "continuous", "bounds": [18, 100]},
    ]
    for c in header[6:12]:
        features.append({"name": c, "kind": "continuous", "integer": True,
                         "scale_group": "repayment_status"})
    for c in header[12:18]:
        features.append({"name": c, "kind": "continuous",
                         "scale_group": "bill_amount"})
    for c in header[18:24]:
        features.append({"name": c, "kind": "continuous",
                         "bounds": [0, None], "scale_group": "payment_amount"})
    schema = {
        "features": features,
        "label": {"name": "default", "classes": ["0", "1"]},
        "id_column": "ID",
    }
    (out / "credit.schema.json").write_text(json.dumps(schema, indent=2) + "\n")


def main():
    root = pathlib.Path(__file__).resolve().parent.parent
    parser = argparse.ArgumentParser()
    parser.add_argument("--wheel-dir", default=str(root / "build" / "wheels"))
    parser.add_argument("--out", default=str(root / "data"))
    args = parser.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    wheels = pathlib.Path(args.wheel_dir)
    prepare_adult(fetch_wheel("responsibly", "0.1.2", wheels), out)
    prepare_credit(fetch_wheel("ethicml", "1.3.0", wheels), out)


if __name__ == "__main__":
    main()
