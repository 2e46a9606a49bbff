#!/usr/bin/env python3
"""Rebuild the standard ml-100k file layout (u.data, u.user, u.item, u1..u5 splits).

Use this when files.grouplens.org is unreachable. The pytorch-widedeep wheel ships
the three ml-100k tables as parquet in their original row order, which is enough
to regenerate the u1..u5 splits with the same procedure as the upstream mku.sh.

    pip download --no-deps pytorch-widedeep
    python3 tools/materialize_ml100k.py --wheel pytorch_widedeep-*.whl --out data/ml-100k
"""
import argparse
import io
import os
import zipfile

import pandas as pd

GENRES = ["unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
          "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
          "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western"]


def read_table(wheel, name):
    with zipfile.ZipFile(wheel) as z:
        raw = z.read(f"pytorch_widedeep/datasets/data/MovieLens100k_{name}.parquet.brotli")
    return pd.read_parquet(io.BytesIO(raw))


def write_ratings(path, frame):
    frame = frame.sort_values(["user_id", "movie_id"], kind="mergesort")
    with open(path, "w", newline="\n") as out:
        for row in frame.itertuples(index=False):
            out.write(f"{row.user_id}\t{row.movie_id}\t{row.rating}\t{row.timestamp}\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--wheel", required=True)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    data = read_table(args.wheel, "data")[["user_id", "movie_id", "rating", "timestamp"]]
    users = read_table(args.wheel, "users")
    items = read_table(args.wheel, "items")
    assert len(data) == 100000 and len(users) == 943 and len(items) == 1682

    with open(os.path.join(args.out, "u.data"), "w", newline="\n") as out:
        for row in data.itertuples(index=False):
            out.write(f"{row.user_id}\t{row.movie_id}\t{row.rating}\t{row.timestamp}\n")

    with open(os.path.join(args.out, "u.user"), "w", newline="\n") as out:
        for row in users.itertuples(index=False):
            out.write(f"{row.user_id}|{row.age}|{row.gender}|{row.occupation}|{row.zip_code}\n")

    with open(os.path.join(args.out, "u.item"), "w", encoding="latin-1", newline="\n") as out:
        for _, row in items.iterrows():
            def field(v):
                return "" if pd.isna(v) else str(v)
            head = [field(row["movie_id"]), field(row["movie_title"]), field(row["release_date"]),
                    field(row["video_release_date"]), field(row["IMDb_URL"])]
            flags = [str(int(row[g])) for g in GENRES]
            out.write("|".join(head + flags) + "\n")

    # Same slicing as mku.sh: fold i tests on rows [(i-1)*20000, i*20000).
    for i in range(1, 6):
        lo, hi = (i - 1) * 20000, i * 20000
        write_ratings(os.path.join(args.out, f"u{i}.test"), data.iloc[lo:hi])
        write_ratings(os.path.join(args.out, f"u{i}.base"),
                      pd.concat([data.iloc[:lo], data.iloc[hi:]]))


if __name__ == "__main__":
    main()
