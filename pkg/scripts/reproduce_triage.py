"""Generate a seeded mixed corpus, batch-decrypt it, and compare against the manifest.

    python3 scripts/reproduce_triage.py --out /tmp/triage --seed 7 --jobs 4
"""

import argparse
import json
from pathlib import Path

from fwforge import packer
from fwforge.decryptor import batch_decrypt

EXPECTED_STATUS = {
    "encrypted_known": {"decrypted"},
    "encrypted_unknown": {"no_key_for_identifier", "all_candidates_failed"},
    "plain": {"plain_passthrough"},
    "garbage": {"not_a_container"},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--known", type=int, default=85)
    ap.add_argument("--unknown", type=int, default=6)
    ap.add_argument("--plain", type=int, default=9)
    ap.add_argument("--garbage", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    spec = packer.CorpusSpec(seed=args.seed, n_encrypted_known=args.known,
                             n_encrypted_unknown=args.unknown, n_plain=args.plain, n_garbage=args.garbage)
    signer = packer.load_test_signing_key()
    store = packer.synthetic_keystore(args.seed, signing_key=signer)
    manifest = packer.generate_corpus(spec, store, args.out / "corpus", signing_key=signer)
    report = batch_decrypt(args.out / "corpus", store, args.out / "decrypted", jobs=args.jobs)

    by_path = {f["path"]: f["status"] for f in report.files}
    mismatches = [m for m in manifest if by_path.get(m["path"]) not in EXPECTED_STATUS[m["kind"]]]
    print(report.render_table())
    print(f"manifest mismatches: {len(mismatches)}")
    (args.out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    raise SystemExit(1 if mismatches else 0)


if __name__ == "__main__":
    main()
