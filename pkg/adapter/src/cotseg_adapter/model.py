"""Small character-level GRU encoder-decoder.

Scoring runs one teacher-forcing pass with the context encoded and the
continuation fed through the decoder; the softmax is taken in float64 so the
per-step entropy stays within [0, ln |V|] to well below the protocol's
tolerance.  Loss is defined as the exact negation of the realized-token
logprob.  Generation is greedy and therefore deterministic.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import torch
from torch import nn

from .vocab import BOS, EOS, PAD, CharVocab


@dataclass
class StepScore:
    token: str
    logprob: float
    entropy: float
    loss: float
    span: tuple[int, int]


class TinySeq2Seq(nn.Module):
    def __init__(self, vocab_size: int, emb_dim: int = 32, hidden_dim: int = 64):
        super().__init__()
        self.embed = nn.Embedding(vocab_size, emb_dim, padding_idx=PAD)
        self.encoder = nn.GRU(emb_dim, hidden_dim, batch_first=True)
        self.decoder = nn.GRU(emb_dim, hidden_dim, batch_first=True)
        self.proj = nn.Linear(hidden_dim, vocab_size)

    def encode(self, src: torch.Tensor) -> torch.Tensor:
        _, hidden = self.encoder(self.embed(src))
        return hidden

    def decode(self, tgt_in: torch.Tensor, hidden: torch.Tensor) -> torch.Tensor:
        out, _ = self.decoder(self.embed(tgt_in), hidden)
        return self.proj(out)

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        return self.decode(tgt_in, self.encode(src))


class ScoringModel:
    """Inference wrapper: vocabulary handling, scoring and greedy decoding."""

    def __init__(self, model: TinySeq2Seq, vocab: CharVocab, max_length: int = 2048):
        self.model = model.eval()
        self.vocab = vocab
        self.max_length = max_length
        self._lock = threading.Lock()  # serialize forwards across server threads

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def _encode_context(self, context: str) -> torch.Tensor:
        ids = [BOS] + self.vocab.encode(context)
        src = torch.tensor([ids], dtype=torch.long)
        return self.model.encode(src)

    def score(self, context: str, continuation: str) -> list[StepScore]:
        if not continuation:
            raise ValueError("continuation must be non-empty")
        if len(context) + len(continuation) > self.max_length:
            raise OverflowError("length exceeded")
        cont_ids = self.vocab.encode(continuation)
        with self._lock, torch.no_grad():
            hidden = self._encode_context(context)
            tgt_in = torch.tensor([[BOS] + cont_ids[:-1]], dtype=torch.long)
            logits = self.model.decode(tgt_in, hidden)[0].double()
            log_probs = torch.log_softmax(logits, dim=-1)
            probs = log_probs.exp()
            entropies = -(probs * log_probs).sum(dim=-1)
        scores = []
        for i, token_id in enumerate(cont_ids):
            logprob = log_probs[i, token_id].item()
            scores.append(
                StepScore(
                    token=continuation[i],
                    logprob=logprob,
                    entropy=entropies[i].item(),
                    loss=-logprob,
                    span=(i, i + 1),
                )
            )
        return scores

    def generate(self, input: str, max_new_tokens: int = 128) -> str:
        if len(input) > self.max_length:
            raise OverflowError("length exceeded")
        with self._lock, torch.no_grad():
            hidden = self._encode_context(input)
            token = torch.tensor([[BOS]], dtype=torch.long)
            out_chars: list[str] = []
            for _ in range(max_new_tokens):
                logits, hidden = self._step(token, hidden)
                next_id = int(torch.argmax(logits, dim=-1).item())
                if next_id == EOS:
                    break
                out_chars.append(self.vocab.decode_id(next_id))
                token = torch.tensor([[next_id]], dtype=torch.long)
        return "".join(out_chars)

    def _step(self, token: torch.Tensor, hidden: torch.Tensor):
        out, hidden = self.model.decoder(self.model.embed(token), hidden)
        return self.model.proj(out)[0, -1], hidden
