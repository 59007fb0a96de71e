"""Per-node blockchain replica stored as a list of (num, prev, length) triples."""

from __future__ import annotations

import enum
import logging
from collections import Counter
from typing import TYPE_CHECKING

from tap_doublespend.exceptions import BoundExhaustedError, ChainInvariantError
from tap_doublespend.model import (
    DEFAULT_MAX_BLOCKS,
    GENESIS_ENTRY,
    GENESIS_NUM,
    Block,
    ChainEntry,
)

if TYPE_CHECKING:
    from collections.abc import Iterator

    from tap_doublespend.model import Transaction

logger = logging.getLogger(__name__)


class AddResult(enum.Enum):
    """Outcome of offering a block to a view."""

    EXTENDED = "extended"
    REORGANIZED = "reorganized"
    SIDE_CHAIN = "side_chain"
    ORPHANED = "orphaned"
    DUPLICATE = "duplicate"


class BlockChainView:
    """A node's copy of the block tree.

    Ties between equal-length branches never displace the current main chain;
    the longest tip only moves when strictly exceeded.
    """

    def __init__(self, capacity: int = DEFAULT_MAX_BLOCKS) -> None:
        self.capacity = capacity
        self.entries: list[ChainEntry] = []
        self.confirmed_blocks: dict[int, Block] = {}
        self.orphans: dict[int, Block] = {}
        self.index_longest = 0
        self.length_longest = 0
        self._position: dict[int, int] = {}

    def init_chain(self) -> None:
        """Reset the view to the genesis-only chain."""
        self.entries = [GENESIS_ENTRY]
        self.confirmed_blocks = {}
        self.orphans = {}
        self._position = {GENESIS_NUM: 0}
        self.index_longest = 0
        self.length_longest = GENESIS_ENTRY.length

    def __contains__(self, num: object) -> bool:
        return num in self._position

    def __len__(self) -> int:
        return len(self.entries)

    def entry(self, num: int) -> ChainEntry:
        """Stored entry of block ``num``."""
        return self.entries[self._position[num]]

    def length_of(self, num: int) -> int | None:
        """Chain length ending at ``num``, or None for an unknown block."""
        pos = self._position.get(num)
        return None if pos is None else self.entries[pos].length

    def add_block(self, block: Block) -> AddResult:
        """Insert ``block`` if its predecessor is known, otherwise buffer it as an orphan.

        Raises:
            BoundExhaustedError: The view already stores ``capacity`` blocks.
        """
        if block.num == GENESIS_NUM:
            msg = "Genesis cannot be added as a block"
            raise ValueError(msg)
        if block.num in self._position or block.num in self.orphans:
            return AddResult.DUPLICATE
        if block.prev not in self._position:
            self.orphans[block.num] = block
            return AddResult.ORPHANED
        if len(self.confirmed_blocks) >= self.capacity:
            raise BoundExhaustedError("max_blocks", self.capacity)

        old_tip = self.longest_chain_tip()
        entry = ChainEntry(block.num, block.prev, self.entry(block.prev).length + 1, block.creator)
        self._position[block.num] = len(self.entries)
        self.entries.append(entry)
        self.confirmed_blocks[block.num] = block

        if entry.length <= self.length_longest:
            return AddResult.SIDE_CHAIN
        self.index_longest = self._position[block.num]
        self.length_longest = entry.length
        if block.prev == old_tip:
            return AddResult.EXTENDED
        logger.debug("Main chain moved from tip %d to %d", old_tip, block.num)
        return AddResult.REORGANIZED

    def longest_chain_tip(self) -> int:
        """Number of the block ending the main chain."""
        return self.entries[self.index_longest].num

    def walk(self, num: int) -> Iterator[ChainEntry]:
        """Yield entries from ``num`` back to genesis along prev links."""
        pos = self._position.get(num)
        while pos is not None:
            entry = self.entries[pos]
            yield entry
            pos = self._position.get(entry.prev)

    def main_chain(self) -> list[int]:
        """Block numbers on the main chain, tip first."""
        return [entry.num for entry in self.walk(self.longest_chain_tip())]

    def check_block_in_chain(self, num: int) -> bool:
        """Whether block ``num`` lies on the main chain."""
        return any(entry.num == num for entry in self.walk(self.longest_chain_tip()))

    def depth_of(self, num: int) -> int | None:
        """Confirmations of a main-chain block, counting the block itself."""
        if not self.check_block_in_chain(num):
            return None
        return self.length_longest - self.entry(num).length + 1

    def main_chain_transactions(self) -> list[Transaction]:
        """Payloads of the main-chain blocks, tip first; genesis carries none."""
        return [
            self.confirmed_blocks[entry.num].tx
            for entry in self.walk(self.longest_chain_tip())
            if entry.num != GENESIS_NUM
        ]

    def main_chain_block_of(self, tx_id: int) -> int | None:
        """Number of the main-chain block carrying transaction ``tx_id``, if any."""
        for entry in self.walk(self.longest_chain_tip()):
            if entry.num != GENESIS_NUM and self.confirmed_blocks[entry.num].tx.id == tx_id:
                return entry.num
        return None

    def creator_counts(self) -> Counter[int]:
        """Main-chain blocks per creating pool, genesis excluded."""
        tip = self.longest_chain_tip()
        return Counter(entry.creator for entry in self.walk(tip) if entry.num != GENESIS_NUM)

    def first_orphan_parent(self) -> int | None:
        """The predecessor wanted by the lowest-numbered orphan."""
        if not self.orphans:
            return None
        return self.orphans[min(self.orphans)].prev

    def serve_block(self, num: int) -> Block | None:
        """Hand out a stored block to a node that is missing it."""
        return self.confirmed_blocks.get(num)

    def absorb_served_block(self, block: Block) -> None:
        """Add a served block, then link every orphan that became attachable."""
        self.add_block(block)
        linked = True
        while linked:
            linked = False
            for num in sorted(self.orphans):
                orphan = self.orphans[num]
                if orphan.prev in self._position:
                    del self.orphans[num]
                    self.add_block(orphan)
                    linked = True

    def check_invariants(self) -> None:
        """Verify length, tree and longest-chain properties by full scan.

        Raises:
            ChainInvariantError: Any property fails.
        """
        if not self.entries or self.entries[0] != GENESIS_ENTRY:
            msg = "View does not start with the genesis entry"
            raise ChainInvariantError(msg)
        # Consistent lengths rule out cycles, so every walk ends at genesis.
        for entry in self.entries[1:]:
            if entry.prev not in self._position:
                msg = f"Block {entry.num} has unknown predecessor {entry.prev}"
                raise ChainInvariantError(msg)
            if entry.length != self.entry(entry.prev).length + 1:
                msg = f"Block {entry.num} has length {entry.length}"
                raise ChainInvariantError(msg)
            if entry.num not in self.confirmed_blocks:
                msg = f"Block {entry.num} has no stored payload"
                raise ChainInvariantError(msg)
        longest = max(entry.length for entry in self.entries)
        if self.length_longest != longest or self.entries[self.index_longest].length != longest:
            msg = f"Longest chain recorded as {self.length_longest}, actual {longest}"
            raise ChainInvariantError(msg)
        stray = set(self.orphans) & set(self._position)
        if stray:
            msg = f"Orphans {sorted(stray)} are also linked"
            raise ChainInvariantError(msg)

    def dump(self) -> str:
        """Render the entries in bracket syntax, e.g. ``{[1,0,1],[2,1,2]}``."""
        return "{" + ",".join(str(entry) for entry in self.entries) + "}"
