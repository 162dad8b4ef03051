"""Character vocabulary with reserved control symbols."""

from __future__ import annotations

PAD = 0
BOS = 1
EOS = 2
UNK = 3
N_SPECIALS = 4


class CharVocab:
    def __init__(self, chars: list[str]):
        self.chars = sorted(set(chars))
        self._char_to_id = {ch: i + N_SPECIALS for i, ch in enumerate(self.chars)}
        self._id_to_char = {i + N_SPECIALS: ch for i, ch in enumerate(self.chars)}

    @classmethod
    def from_texts(cls, texts) -> "CharVocab":
        chars = {ch for text in texts for ch in text}
        if not chars:
            raise ValueError("no characters to build a vocabulary from")
        return cls(sorted(chars))

    def __len__(self) -> int:
        return len(self.chars) + N_SPECIALS

    def encode(self, text: str) -> list[int]:
        return [self._char_to_id.get(ch, UNK) for ch in text]

    def decode_id(self, token_id: int) -> str:
        return self._id_to_char.get(token_id, "")
