#!/usr/bin/env python3
"""Masked-LM inference server for the `inference` encoder backend.

Reads one JSON request per line on stdin and writes one JSON response per
line on stdout. The relation embedding is the final hidden layer at the
mask position; the MLM head provides top-token predictions.

Placeholders [CLS], [MASK] and [SEP] in the prompt text are mapped to the
tokenizer's own special tokens, so BERT and RoBERTa checkpoints both work.
"""

import argparse
import json
import re
import sys

import torch
from transformers import AutoModelForMaskedLM, AutoTokenizer

PLACEHOLDER = re.compile(r"(\[CLS\]|\[MASK\]|\[SEP\])")


def tokenize(tokenizer, text):
    special = {
        "[CLS]": tokenizer.cls_token_id if tokenizer.cls_token_id is not None else tokenizer.bos_token_id,
        "[SEP]": tokenizer.sep_token_id if tokenizer.sep_token_id is not None else tokenizer.eos_token_id,
        "[MASK]": tokenizer.mask_token_id,
    }
    ids, mask_pos, after_cls = [], None, False
    for piece in PLACEHOLDER.split(text):
        if piece in special:
            if piece == "[MASK]":
                mask_pos = len(ids)
            ids.append(special[piece])
            after_cls = piece == "[CLS]"
            continue
        piece = piece.rstrip()
        if after_cls:
            piece = piece.lstrip()
        if piece:
            ids.extend(tokenizer.encode(piece, add_special_tokens=False))
    return ids, mask_pos


class Server:
    def __init__(self, model, max_length, device):
        self.tokenizer = AutoTokenizer.from_pretrained(model)
        self.model = AutoModelForMaskedLM.from_pretrained(model).to(device).eval()
        self.name = model
        self.max_length = max_length
        self.device = device

    def _forward(self, texts):
        """Returns per-text (hidden, logits) at the mask, or an error dict."""
        encoded, out = [], [None] * len(texts)
        for i, text in enumerate(texts):
            ids, mask_pos = tokenize(self.tokenizer, text)
            if mask_pos is None:
                out[i] = {"error": "no mask"}
            elif len(ids) > self.max_length:
                out[i] = {"error": "too_long", "tokens": len(ids)}
            else:
                encoded.append((i, ids, mask_pos))
        if not encoded:
            return out
        width = max(len(ids) for _, ids, _ in encoded)
        pad = self.tokenizer.pad_token_id or 0
        input_ids = torch.full((len(encoded), width), pad, dtype=torch.long)
        attention = torch.zeros((len(encoded), width), dtype=torch.long)
        for row, (_, ids, _) in enumerate(encoded):
            input_ids[row, : len(ids)] = torch.tensor(ids)
            attention[row, : len(ids)] = 1
        with torch.no_grad():
            result = self.model(
                input_ids=input_ids.to(self.device),
                attention_mask=attention.to(self.device),
                output_hidden_states=True,
            )
        hidden = result.hidden_states[-1]
        for row, (i, _, mask_pos) in enumerate(encoded):
            out[i] = (hidden[row, mask_pos].cpu(), result.logits[row, mask_pos].cpu())
        return out

    def handle(self, request):
        op = request.get("op")
        if op == "info":
            return {
                "name": self.name,
                "hidden_dim": self.model.config.hidden_size,
                "max_length": self.max_length,
                "mlm_head": True,
            }
        if op == "embed":
            results = []
            for item in self._forward(request["texts"]):
                if isinstance(item, dict):
                    results.append(item)
                else:
                    results.append({"embedding": item[0].tolist()})
            return {"results": results}
        if op == "top_tokens":
            m = int(request["m"])
            results = []
            for item in self._forward(request["texts"]):
                if isinstance(item, dict):
                    results.append(item)
                    continue
                scores, ids = torch.topk(item[1], m)
                tokens = self.tokenizer.convert_ids_to_tokens(ids.tolist())
                results.append({"tokens": [[t, float(s)] for t, s in zip(tokens, scores)]})
            return {"results": results}
        return {"fatal": f"unknown op {op!r}"}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--model", required=True)
    parser.add_argument("--max-length", type=int, default=512)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args()
    server = Server(args.model, args.max_length, args.device)
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            response = server.handle(json.loads(line))
        except Exception as exc:  # reported to the client, which aborts
            response = {"fatal": str(exc)}
        sys.stdout.write(json.dumps(response) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
