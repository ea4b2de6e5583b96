"""The on-disk dataset layout and its validator.

A dataset directory holds four canonical files:
    embeddings.bin   per-clip float32 frame matrices (binary, magic-tagged)
    labels.csv       clip_id,class_index,state rows (1/0/-1)
    classes.csv      class_index,name
    splits.csv       clip_id,split (train or test)
plus an optional fixed_validation.csv pinning the validation clips (used by
corpora that ship an official validation split).  `pllearn ingest-validate`
checks the whole directory; experiment specs point at it with data_dir.
"""

import tempfile
from pathlib import Path

import pllearn as pl
from pllearn import dataio
from pllearn.cli import main as cli_main


def main():
    dataset, _ = pl.generate_synthetic(pl.SyntheticSpec(
        num_clips=50, num_classes=3, frames_per_clip=5, embed_dim=8, seed=2,
        test_fraction=0.2,
    ))

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp) / "corpus"
        root.mkdir()
        dataio.write_dataset_dir(dataset, root)

        print("files written:")
        for p in sorted(root.iterdir()):
            print(f"  {p.name:22s} {p.stat().st_size:6d} bytes")

        print("\nlabels.csv head:")
        for line in (root / "labels.csv").read_text().splitlines()[:4]:
            print("  " + line)

        # pin ten train clips as the validation set
        train_ids = [dataset.clip_ids[i]
                     for i in dataset.indices_for_split("train")]
        dataio.write_fixed_validation(
            root / dataio.FIXED_VALIDATION_FILENAME, train_ids[:10]
        )

        print("\n$ pllearn ingest-validate --dir corpus")
        rc = cli_main(["ingest-validate", "--dir", str(root)])
        print(f"(exit code {rc})")

        reloaded = dataio.read_dataset_dir(root)
        same = pl.dataset_fingerprint(reloaded) == pl.dataset_fingerprint(dataset)
        print(f"\nround trip preserves the content fingerprint: {same}")

        # corrupting any byte of the embeddings is caught on read
        blob = bytearray((root / "embeddings.bin").read_bytes())
        blob[7] ^= 0xFF  # damage the magic/header region
        (root / "embeddings.bin").write_bytes(bytes(blob))
        try:
            dataio.read_dataset_dir(root)
        except dataio.DatasetIOError as exc:
            print(f"corrupted file rejected: {exc}")


if __name__ == "__main__":
    main()
