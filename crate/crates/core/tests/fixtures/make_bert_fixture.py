"""Regenerates the tiny BERT fixture used by the encoder tests.

Builds a randomly initialized BertModel with a small vocabulary, saves it in
safetensors format next to this script, and records the tokenizer ids and
the mean-pooled penultimate-layer hidden state for a set of sentences.
"""
import json
import pathlib

import torch
from transformers import BertConfig, BertModel, BertTokenizer

HERE = pathlib.Path(__file__).parent / "bert_tiny"
HERE.mkdir(exist_ok=True)

words = """i am so happy glad the invoice is attached hello world you are my
friend play cafe oh no what why we were on a break monica ross rachel
chandler joey phoebe naked totally realize it can not wait meet friends
thank welcome hi yeah maybe instead of""".split()
pieces = ["##ing", "##ed", "##s", "##y", "##er", "##ly", "##'", "##t"]
letters = [chr(c) for c in range(ord("a"), ord("z") + 1)]
punct = list("!?.,'\"-:;()…’“”") + ["çafe"]
vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + letters + ["##" + c for c in letters] + words + pieces + punct + ["中", "文"]
seen = set()
vocab = [v for v in vocab if not (v in seen or seen.add(v))]
(HERE / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")

torch.manual_seed(7)
config = BertConfig(
    vocab_size=len(vocab),
    hidden_size=16,
    num_hidden_layers=3,
    num_attention_heads=4,
    intermediate_size=24,
    max_position_embeddings=64,
    type_vocab_size=2,
)
model = BertModel(config).eval()
model.save_pretrained(HERE, safe_serialization=True)
tok = BertTokenizer(str(HERE / "vocab.txt"), do_lower_case=True)

sentences = [
    "I am so happy!",
    "I am so glad!",
    "The invoice is attached.",
    "Hello, World… you’re my FRIEND",
    "Café playing: naked?!",
    "We were on a break!!!",
    "中文 x",
    "Unbelievablyxyzq words",
    "",
    "   tabs\tand\nnewlines  ",
]
cases = []
with torch.no_grad():
    for s in sentences:
        enc = tok(s, return_tensors="pt")
        out = model(**enc, output_hidden_states=True)
        pooled = out.hidden_states[-2][0].mean(dim=0)
        cases.append({
            "text": s,
            "ids": enc["input_ids"][0].tolist(),
            "embedding": [float(x) for x in pooled],
        })
(HERE / "expected.json").write_text(json.dumps(cases, indent=1, ensure_ascii=False), encoding="utf-8")
print(len(vocab), "tokens;", len(cases), "cases")
