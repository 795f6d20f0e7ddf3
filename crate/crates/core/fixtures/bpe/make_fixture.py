"""Regenerates the BPE token-count fixture with HF tokenizers as the reference.

Trains a small byte-level BPE vocabulary, writes it in tiktoken ranks format
(single bytes first, then one rank per merge in merge order), and records the
reference tokenizer's own counts for a handful of strings. The Rust tokenizer
is checked against these.

    python3 make_fixture.py
"""
import base64
import json

from tokenizers import Regex, Tokenizer, models, pre_tokenizers, trainers
from tokenizers.pre_tokenizers import ByteLevel

PATTERN = r"'(?:[sdmt]|ll|ve|re)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+"

TRAINING = (
    "The accession refers to a Nucleotide Sequence record from the GenBank "
    "Nucleotide Database. The record contains nucleotide sequence data from "
    "a Prokaryote. The sequenced strain was used in a phylogenetic analysis "
    "with PhyML and RAxML, and genomes were compared using BLAST and MUMmer. "
) * 20

SAMPLES = [
    "",
    "TRUE",
    "The accession \"CP001672.1\" refers to a Nucleotide Sequence record.",
    "Outgroup selection in phylogenetic analysis; rooting of the phylogenetic tree.",
    "1. PhyML\n2. RAxML 8.2.11\n3. BEAST 2.4.5",
    "Genomes were sequenced,   annotated and deposited (accession GCF_000696285.1)!",
    "Ünïcödé strains: Methylotenera mobilis JLW8 - 54,600 tokens",
    "the the the sequence sequences nucleotide Nucleotide",
]


def byte_decoder():
    # inverse of the GPT-2 byte-to-unicode table used by ByteLevel
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) \
        + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return {chr(c): b for b, c in zip(bs, cs)}


def main():
    tok = Tokenizer(models.BPE())
    tok.pre_tokenizer = pre_tokenizers.Sequence([
        pre_tokenizers.Split(Regex(PATTERN), behavior="isolated"),
        ByteLevel(add_prefix_space=False, use_regex=False),
    ])
    trainer = trainers.BpeTrainer(
        vocab_size=320, initial_alphabet=ByteLevel.alphabet(), show_progress=False
    )
    tok.train_from_iterator([TRAINING], trainer=trainer)

    dec = byte_decoder()
    to_bytes = lambda s: bytes(dec[c] for c in s)
    model = json.loads(tok.to_str())["model"]
    ranks = {bytes([b]): b for b in range(256)}
    for m in model["merges"]:
        a, b = m if isinstance(m, list) else m.split(" ")
        merged = to_bytes(a) + to_bytes(b)
        assert merged not in ranks, merged
        ranks[merged] = len(ranks)

    with open("ranks.tiktoken", "w") as f:
        for t, rank in sorted(ranks.items(), key=lambda kv: kv[1]):
            f.write(f"{base64.b64encode(t).decode()} {rank}\n")
    counts = [{"text": s, "tokens": len(tok.encode(s).ids)} for s in SAMPLES]
    with open("reference_counts.json", "w") as f:
        json.dump(counts, f, ensure_ascii=False, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
