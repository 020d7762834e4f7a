"""Deterministic discrete-event simulation of the crowdsensing ledger.

Blocks are produced at a fixed interval ``t_block``; there is no proof of
work.  A transaction is included in the first block mined strictly after
its timestamp, and executes in (timestamp, submission) order.  Contracts
are plain Python objects attached to contract accounts.  They react to
transactions addressed to them (``on_tx``) and to the passage of time
(``on_block``, run after the block's transactions).  Contract-generated
transfers execute immediately and are recorded in the same block.

Four contracts drive a request:

* ``RequestRegistration`` escrows the CSP's fee until the deadline, then
  either releases it to the ISP (data delivered) or refunds the CSP.
* ``AuctionContract`` collects pseudonymous bids with deposits, runs CSOPT
  when the bidding window closes, refunds losers and hands winners'
  deposits to the payment contract.
* ``UserPayment`` pays each winner on data submission and forfeits the
  deposits of winners who stay silent past the task deadline.
* ``DataAccess`` sells the owner-tagged credentials to the CSP at the
  amount paid out to the workers.

Credits are integers.  Auction money (exact fractions) is converted with
``credits_per_unit`` and must come out integral.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Tuple

from .auction import AuctionError, AuctionInstance, Bid, Task, run_csopt

PSEUDONYM_MAX = 2**512


class ChainError(Exception):
    pass


class InsufficientBalance(ChainError):
    pass


class ContractReject(ChainError):
    """Raised inside a contract to revert the triggering transaction."""


class LateBid(ContractReject):
    pass


class DuplicateBid(ContractReject):
    pass


class UnknownPseudonym(ContractReject):
    pass


class AfterDeadline(ContractReject):
    pass


class NotReady(ContractReject):
    pass


class Ignored(ContractReject):
    """Reverted as a no-op (e.g. a repeated submission)."""


def addr_hex(a: int) -> str:
    return format(a, "0128x")


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def encode(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


@dataclass
class Account:
    address: int
    balance: int = 0
    kind: str = "eoa"  # "eoa" | "contract"
    label: str = ""


@dataclass(frozen=True)
class Transaction:
    seq: int
    sender: int
    destination: int
    credits: int
    payload: bytes
    timestamp: object
    kind: str
    internal: bool = False


@dataclass
class Block:
    height: int
    mined_at: object
    transactions: List[Transaction] = field(default_factory=list)


@dataclass
class TimingParams:
    t_block: object = 1
    t_ann: object = 0
    t_bidding: object = 0
    t_csopt: object = 0
    t_task: object = 0


def end_to_end_delay(t_block, t_ann, t_bidding, t_csopt, t_task):
    """Request-to-data delay: max(t_B, t_ann) + t_bidding + t_CSOPT + max(t_B, t_task) + t_B."""
    for v in (t_block, t_ann, t_bidding, t_csopt, t_task):
        if v < 0:
            raise ValueError("timing parameters must be nonnegative")
    return max(t_block, t_ann) + t_bidding + t_csopt + max(t_block, t_task) + t_block


class Chain:
    def __init__(self, t_block=1, seed: int = 0):
        if t_block <= 0:
            raise ValueError("t_block must be positive")
        self.t_block = t_block
        self.rng = random.Random(f"chain:{seed}")
        self.accounts: Dict[int, Account] = {}
        self.contracts: Dict[int, "Contract"] = {}
        self.blocks: List[Block] = [Block(0, 0 * t_block)]
        self.mempool: List[Transaction] = []
        self.receipts: Dict[int, str] = {}
        self.supply = 0
        self.audit: List[Tuple[int, int]] = []  # (height, total credits)
        self._seq = 0
        self._current: Optional[Block] = None

    # accounts ----------------------------------------------------------
    @property
    def height(self) -> int:
        return self.blocks[-1].height

    @property
    def now(self):
        return self.blocks[-1].mined_at

    def fresh_address(self, rng: Optional[random.Random] = None) -> int:
        rng = rng or self.rng
        while True:
            a = rng.randrange(1, PSEUDONYM_MAX + 1)
            if a not in self.accounts:
                return a

    def create_account(self, balance: int = 0, label: str = "", address: Optional[int] = None) -> int:
        a = self.fresh_address() if address is None else address
        if a in self.accounts:
            raise ChainError("address already in use")
        self.accounts[a] = Account(a, 0, "eoa", label)
        if balance:
            self.mint(a, balance)
        return a

    def deploy(self, contract: "Contract", label: str = "") -> int:
        a = self.fresh_address()
        self.accounts[a] = Account(a, 0, "contract", label or type(contract).__name__)
        contract.address = a
        contract.chain = self
        self.contracts[a] = contract
        return a

    def mint(self, address: int, credits: int):
        """Endow an account; the only way credits enter the system."""
        if credits < 0:
            raise ValueError("cannot mint a negative amount")
        self.accounts[address].balance += credits
        self.supply += credits

    def balance(self, address: int) -> int:
        return self.accounts[address].balance

    def move(self, src: int, dst: int, credits: int):
        """Off-chain (conventional) transfer between two accounts; not traced."""
        if self.accounts[src].balance < credits:
            raise InsufficientBalance(f"{self.accounts[src].label or addr_hex(src)[:8]} needs {credits}")
        self.accounts[src].balance -= credits
        self.accounts[dst].balance += credits

    def total_credits(self) -> int:
        return sum(a.balance for a in self.accounts.values())

    # transactions ------------------------------------------------------
    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def submit(self, sender: int, destination: int, credits: int = 0, payload: bytes = b"",
               kind: str = "transfer", at=None) -> int:
        at = self.now if at is None else at
        if at < self.now:
            raise ChainError("cannot submit into the past")
        if credits < 0:
            raise ValueError("negative credits")
        tx = Transaction(self._next_seq(), sender, destination, credits, payload, at, kind)
        self.mempool.append(tx)
        return tx.seq

    def internal(self, sender: int, destination: int, credits: int, kind: str, payload: bytes = b""):
        """Contract-generated transfer executed immediately in the current block."""
        if self._current is None:
            raise ChainError("internal transactions only run inside a block")
        if self.accounts[sender].balance < credits:
            raise InsufficientBalance(f"internal {kind}: sender short of {credits}")
        tx = Transaction(self._next_seq(), sender, destination, credits, payload,
                         self._current.mined_at, kind, internal=True)
        self.accounts[sender].balance -= credits
        self.accounts[destination].balance += credits
        self._current.transactions.append(tx)
        self.receipts[tx.seq] = "ok"
        return tx

    def _execute(self, tx: Transaction):
        block = self._current
        if self.accounts[tx.sender].balance < tx.credits:
            self.receipts[tx.seq] = "rejected:InsufficientBalance"
            block.transactions.append(tx)
            return
        self.accounts[tx.sender].balance -= tx.credits
        self.accounts[tx.destination].balance += tx.credits
        block.transactions.append(tx)
        mark = len(block.transactions)
        contract = self.contracts.get(tx.destination)
        if contract is None:
            self.receipts[tx.seq] = "ok"
            return
        try:
            contract.on_tx(tx)
            self.receipts[tx.seq] = "ok"
        except ContractReject as e:
            # contracts raise before emitting anything, so reverting the
            # triggering transfer is enough
            assert len(block.transactions) == mark
            self.accounts[tx.destination].balance -= tx.credits
            self.accounts[tx.sender].balance += tx.credits
            status = "ignored" if isinstance(e, Ignored) else "rejected"
            self.receipts[tx.seq] = f"{status}:{type(e).__name__}"

    def mine_block(self) -> Block:
        h = self.height + 1
        t = h * self.t_block
        block = Block(h, t)
        self._current = block
        ready = sorted((tx for tx in self.mempool if tx.timestamp < t), key=lambda x: (x.timestamp, x.seq))
        self.mempool = [tx for tx in self.mempool if not tx.timestamp < t]
        for tx in ready:
            self._execute(tx)
        for c in list(self.contracts.values()):
            c.on_block(t)
        self._current = None
        self.blocks.append(block)
        total = self.total_credits()
        self.audit.append((h, total))
        if total != self.supply:
            raise AssertionError(f"credit conservation broken at height {h}: {total} != {self.supply}")
        return block

    def mine_until(self, t) -> List[Block]:
        """Mine every block with time <= t (empty blocks included)."""
        out = []
        while (self.height + 1) * self.t_block <= t:
            out.append(self.mine_block())
        return out

    def receipt(self, seq: int) -> Optional[str]:
        return self.receipts.get(seq)

    def block_of(self, seq: int) -> Optional[Block]:
        for b in self.blocks:
            if any(tx.seq == seq for tx in b.transactions):
                return b
        return None

    # trace -------------------------------------------------------------
    def trace(self) -> List[dict]:
        rows = []
        for b in self.blocks:
            for tx in b.transactions:
                rows.append({
                    "height": b.height,
                    "time": str(b.mined_at),
                    "sender": addr_hex(tx.sender),
                    "destination": addr_hex(tx.destination),
                    "credits": tx.credits,
                    "kind": tx.kind,
                    "payload_digest": digest(tx.payload),
                    "status": self.receipts.get(tx.seq, "pending"),
                })
        return rows

    def trace_lines(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.trace())


class Contract:
    address: int = 0
    chain: Chain = None

    def on_tx(self, tx: Transaction):
        raise ContractReject(f"{type(self).__name__} accepts no direct calls")

    def on_block(self, t):
        pass

    @property
    def escrow(self) -> int:
        return self.chain.balance(self.address)


class RequestRegistration(Contract):
    def __init__(self, csp: int, isp: int, deadline, fee: int, descriptor: dict):
        self.csp = csp
        self.isp = isp
        self.deadline = deadline
        self.fee = fee
        self.descriptor = descriptor
        self.registered = False
        self.da_address: Optional[int] = None
        self.data_digest: Optional[str] = None
        self.settled = False
        self.refunded = False
        self.settled_at = None

    def on_tx(self, tx):
        if tx.kind == "rr.register":
            if self.registered or tx.sender != self.csp or tx.credits != self.fee:
                raise ContractReject("bad registration")
            self.registered = True
        elif tx.kind == "rr.fill":
            if tx.sender != self.isp or tx.credits:
                raise ContractReject("only the ISP fills the registration")
            if self.settled or tx.timestamp >= self.deadline:
                raise AfterDeadline("registration already past its deadline")
            body = json.loads(tx.payload)
            self.da_address = int(body["da"], 16)
            self.data_digest = body["digest"]
        else:
            raise ContractReject(f"unknown call {tx.kind}")

    def on_block(self, t):
        if self.settled or not self.registered or t < self.deadline:
            return
        delivered = self.da_address is not None and self.data_digest is not None
        if self.fee:
            to = self.isp if delivered else self.csp
            self.chain.internal(self.address, to, self.fee, "rr.release" if delivered else "rr.refund")
        self.refunded = not delivered
        self.settled = True
        self.settled_at = t


@dataclass
class SealedBlob:
    """Credentials readable only by the account they were sealed for."""
    owner: int
    _content: str

    def open(self, requester: int) -> str:
        if requester != self.owner:
            raise PermissionError("credentials are sealed for a different account")
        return self._content


class DataAccess(Contract):
    def __init__(self, isp: int, owner: int, credentials: str, price: int, rr: RequestRegistration):
        self.isp = isp
        self.blob = SealedBlob(owner, credentials)
        self.price = price
        self.rr = rr
        self.access_log: List[Tuple[object, int]] = []

    def on_tx(self, tx):
        if tx.kind != "da.access":
            raise ContractReject(f"unknown call {tx.kind}")
        if not self.rr.settled or self.rr.da_address != self.address:
            raise NotReady("request not settled yet")
        if tx.credits != self.price:
            raise ContractReject("wrong price")
        if self.price:
            self.chain.internal(self.address, self.isp, self.price, "da.revenue")
        self.access_log.append((tx.timestamp, tx.sender))


class UserPayment(Contract):
    """Pays winners on submission; lump sum per winner."""

    def __init__(self, isp: int, auction: "AuctionContract", allocation: Dict[int, Tuple[List[int], int]],
                 task_deadline):
        self.isp = isp
        self.auction = auction
        self.allocation = allocation  # pseudonym -> (task ids, payment credits)
        self.task_deadline = task_deadline
        self.submissions: Dict[int, str] = {}
        self.paid: Dict[int, int] = {}
        self.forfeited: List[int] = []
        self.closed = False
        self.finished_at = None

    def on_tx(self, tx):
        if tx.kind != "mup.submit":
            raise ContractReject(f"unknown call {tx.kind}")
        p = tx.sender
        if p not in self.allocation:
            raise UnknownPseudonym("sender holds no assignment")
        if p in self.submissions:
            raise Ignored("already submitted")
        if self.closed or tx.timestamp > self.task_deadline:
            raise AfterDeadline("task deadline passed")
        self.submissions[p] = json.loads(tx.payload)["digest"]
        pay = self.allocation[p][1]
        held = self.auction.held.pop(p)
        amount = pay + held + tx.credits
        self.chain.internal(self.address, p, amount, "mup.pay")
        self.paid[p] = pay
        if len(self.submissions) == len(self.allocation):
            self._finish(tx.timestamp)

    def on_block(self, t):
        if self.closed or t <= self.task_deadline:
            return
        for p in sorted(self.allocation):
            if p in self.submissions:
                continue
            held = self.auction.held.pop(p)
            self.chain.internal(self.address, self.isp, held, "mup.forfeit")
            pay = self.allocation[p][1]
            if pay:
                self.chain.internal(self.address, self.isp, pay, "mup.withhold")
            self.forfeited.append(p)
        self._finish(t)

    def _finish(self, t):
        self.closed = True
        self.finished_at = self.chain._current.mined_at
        self.auction.on_payment_done(self)


class AuctionContract(Contract):
    def __init__(self, isp: int, tasks: Iterable[Task], alpha, beta, r: Optional[int], deposit: int,
                 call_fee: int, window: Tuple[object, object], t_csopt, task_deadline,
                 credits_per_unit: int, rr: Optional[RequestRegistration], csp: Optional[int],
                 credentials: str = ""):
        self.isp = isp
        self.tasks = tuple(tasks)
        self.alpha, self.beta, self.r = alpha, beta, r
        self.deposit = deposit
        self.call_fee = call_fee
        self.open_at, self.close_at = window
        self.t_csopt = t_csopt
        self.task_deadline = task_deadline
        self.credits_per_unit = credits_per_unit
        self.rr = rr
        self.csp = csp
        self.credentials = credentials
        self.bids: Dict[int, Bid] = {}
        self.held: Dict[int, int] = {}  # winner pseudonym -> deposit + fee, kept until payment
        self.outcome = None
        self.status = "open"  # open -> closed | aborted
        self.closed_at = None
        self.mup: Optional[UserPayment] = None
        self.da: Optional[DataAccess] = None
        self.da_created_at = None

    def on_tx(self, tx):
        if tx.kind != "csopt.bid":
            raise ContractReject(f"unknown call {tx.kind}")
        if self.status != "open" or not (self.open_at <= tx.timestamp <= self.close_at):
            raise LateBid("outside the bidding window")
        if tx.sender in self.bids:
            raise DuplicateBid("pseudonym already bid")
        if tx.credits != self.deposit + self.call_fee:
            raise ContractReject("bid must carry deposit plus call fee")
        body = json.loads(tx.payload)
        try:
            bid = Bid(tx.sender, Fraction(body["cost"]), body["tasks"], body.get("capacity"))
        except (AuctionError, KeyError, ValueError) as e:
            raise ContractReject(f"malformed bid: {e}") from None
        if not bid.task_ids <= {t.id for t in self.tasks}:
            raise ContractReject("bid names unknown tasks")
        self.bids[tx.sender] = bid

    def to_credits(self, x: Fraction) -> int:
        v = Fraction(x) * self.credits_per_unit
        if v.denominator != 1:
            raise ChainError(f"{x} is not a whole number of credits")
        return int(v)

    def on_block(self, t):
        if self.status != "open" or not t > self.close_at + self.t_csopt:
            return
        self.closed_at = t
        stake = self.deposit + self.call_fee
        outcome = None
        if self.bids:
            inst = AuctionInstance(self.tasks, tuple(self.bids.values()), self.alpha, self.beta, self.r)
            try:
                outcome = run_csopt(inst)
            except AuctionError:
                outcome = None
        if outcome is None:
            self.status = "aborted"
            for p in sorted(self.bids):
                self.chain.internal(self.address, p, stake, "csopt.refund")
            return
        self.outcome = outcome
        self.status = "closed"
        winners = outcome.winners()
        for p in sorted(self.bids):
            if p not in winners:
                self.chain.internal(self.address, p, stake, "csopt.refund")
        allocation = {
            p: (sorted(outcome.tasks_of(p)), self.to_credits(outcome.payments[p])) for p in winners
        }
        self.mup = UserPayment(self.isp, self, allocation, self.task_deadline)
        mup_addr = self.chain.deploy(self.mup, "MUP")
        payload = encode({addr_hex(p): {"tasks": ts, "payment": pay} for p, (ts, pay) in allocation.items()})
        self.chain.internal(self.address, mup_addr, stake * len(winners), "csopt.outcome", payload)
        for p in winners:
            self.held[p] = stake
        total = sum(pay for _, pay in allocation.values())
        self.chain.internal(self.isp, mup_addr, total, "isp.fund_payments")

    def on_payment_done(self, mup: UserPayment):
        """All winners submitted (or the task deadline passed): publish data access."""
        if not mup.submissions or self.rr is None:
            return
        paid = sum(mup.paid.values())
        agg = digest("".join(mup.submissions[p] for p in sorted(mup.submissions)).encode())
        self.da = DataAccess(self.isp, self.csp, self.credentials, paid, self.rr)
        da_addr = self.chain.deploy(self.da, "DA")
        # the ISP records DA's address and the data hash in the registration
        tx = self.chain.internal(self.isp, self.rr.address, 0, "rr.fill",
                                 encode({"da": addr_hex(da_addr), "digest": agg}))
        try:
            self.rr.on_tx(tx)
        except ContractReject as e:
            self.chain.receipts[tx.seq] = f"rejected:{type(e).__name__}"
            return
        self.da_created_at = tx.timestamp


class PseudonymRegistry:
    """Fresh per-auction identities drawn uniformly from [1, 2**512]."""

    def __init__(self, master_seed: int = 0):
        self.master_seed = master_seed
        self.auctions: List[Dict[int, int]] = []

    def issue(self, user_ids: Iterable[int], taken=()) -> Dict[int, int]:
        index = len(self.auctions)
        rng = random.Random(f"pseudonyms:{self.master_seed}:{index}")
        taken = set(taken)
        mapping = {}
        for u in sorted(user_ids):
            while True:
                p = rng.randrange(1, PSEUDONYM_MAX + 1)
                if p not in taken:
                    break
            taken.add(p)
            mapping[u] = p
        self.auctions.append(mapping)
        return mapping

    def all_pseudonyms(self) -> List[int]:
        return [p for m in self.auctions for p in m.values()]


@dataclass
class ProtocolConfig:
    deposit: int = 10
    registration_fee: int = 100
    call_fee: int = 1
    credits_per_unit: int = 100  # credits per unit of auction money (cents)
    user_endowment: int = 10**6
    isp_endowment: int = 10**9
    csp_endowment: int = 10**9


class Protocol:
    """One ISP, one CSP and a population of mobile users on a shared chain."""

    def __init__(self, chain: Chain, user_ids: Iterable[int], config: Optional[ProtocolConfig] = None,
                 seed: int = 0):
        self.chain = chain
        self.config = config or ProtocolConfig()
        self.isp = chain.create_account(self.config.isp_endowment, "ISP")
        self.csp = chain.create_account(self.config.csp_endowment, "CSP")
        # real wallets are off-chain identities; their addresses are never
        # used as senders of protocol transactions
        self.wallets = {u: chain.create_account(self.config.user_endowment, "wallet") for u in sorted(user_ids)}
        self.registry = PseudonymRegistry(seed)
        self.requests: List[RequestRegistration] = []
        self.auctions: List[AuctionContract] = []
        self.pseudonyms: List[Dict[int, int]] = []

    def register_request(self, descriptor: dict, deadline, fee: Optional[int] = None) -> RequestRegistration:
        fee = self.config.registration_fee if fee is None else fee
        if self.chain.balance(self.csp) < fee:
            raise InsufficientBalance("CSP cannot cover the registration fee")
        rr = RequestRegistration(self.csp, self.isp, deadline, fee, descriptor)
        self.chain.deploy(rr, "RR")
        payload = encode({"request": digest(encode(descriptor)), "timestamp": str(self.chain.now),
                          "deadline": str(deadline)})
        self.chain.submit(self.csp, rr.address, fee, payload, "rr.register")
        self.requests.append(rr)
        return rr

    def open_auction(self, inst: AuctionInstance, window, task_deadline, t_csopt=0,
                     rr: Optional[RequestRegistration] = None, deposit: Optional[int] = None,
                     credentials: str = "db://crowdsensing") -> Tuple[AuctionContract, Dict[int, int]]:
        cfg = self.config
        deposit = cfg.deposit if deposit is None else deposit
        users = [b.user_id for b in inst.bids]
        stake = deposit + cfg.call_fee
        for u in users:
            if self.chain.balance(self.wallets[u]) < stake:
                raise InsufficientBalance(f"user wallet cannot cover deposit {stake}")
        mapping = self.registry.issue(users, taken=self.chain.accounts.keys())
        for u, p in mapping.items():
            self.chain.create_account(0, "pseudonym", address=p)
            # temporary account funded through the ISP, off-chain
            self.chain.move(self.wallets[u], p, stake + cfg.call_fee)
        auction = AuctionContract(self.isp, inst.tasks, inst.alpha, inst.beta, inst.r, deposit, cfg.call_fee,
                                  window, t_csopt, task_deadline, cfg.credits_per_unit, rr, self.csp,
                                  credentials)
        self.chain.deploy(auction, "CSOPT")
        self.auctions.append(auction)
        self.pseudonyms.append(mapping)
        return auction, mapping

    def bid(self, auction: AuctionContract, pseudonym: int, bid: Bid, at=None) -> int:
        at = self.chain.now if at is None else at
        if not auction.open_at <= at <= auction.close_at:
            raise LateBid("outside the bidding window")
        body = {"cost": str(bid.cost_per_task), "tasks": sorted(bid.task_ids)}
        if bid.capacity is not None:
            body["capacity"] = bid.capacity
        return self.chain.submit(pseudonym, auction.address, auction.deposit + auction.call_fee,
                                 encode(body), "csopt.bid", at)

    def submit_data(self, auction: AuctionContract, pseudonym: int, data_digest: str, at=None) -> int:
        at = self.chain.now if at is None else at
        mup = auction.mup
        if mup is None or pseudonym not in mup.allocation:
            raise UnknownPseudonym("pseudonym holds no assignment")
        if at > mup.task_deadline:
            raise AfterDeadline("task deadline passed")
        return self.chain.submit(pseudonym, mup.address, auction.call_fee,
                                 encode({"digest": data_digest}), "mup.submit", at)

    def access_data(self, rr: RequestRegistration, csp: Optional[int] = None) -> SealedBlob:
        """CSP pays the data price and receives the sealed credentials."""
        csp = self.csp if csp is None else csp
        if not rr.settled or rr.da_address is None:
            raise NotReady("data not available")
        da: DataAccess = self.chain.contracts[rr.da_address]
        if self.chain.balance(csp) < da.price:
            raise InsufficientBalance("CSP cannot cover the data price")
        seq = self.chain.submit(csp, da.address, da.price, encode({"rr": addr_hex(rr.address)}), "da.access")
        self.chain.mine_block()
        status = self.chain.receipt(seq)
        if status != "ok":
            raise NotReady(status)
        return da.blob


@dataclass
class ProtocolRun:
    chain: Chain
    protocol: Protocol
    rr: RequestRegistration
    auction: AuctionContract
    pseudonyms: Dict[int, int]
    formula: object
    completed_at: object  # block time at which data access became available
    deadline: object


def run_scripted(inst: AuctionInstance, timing: TimingParams, seed: int = 0,
                 config: Optional[ProtocolConfig] = None, silent: Iterable[int] = (),
                 deadline=None, chain: Optional[Chain] = None,
                 protocol: Optional[Protocol] = None) -> ProtocolRun:
    """Full request -> auction -> submission -> data-access flow.

    Users in ``silent`` never submit their data.  Returns the block time at
    which the data became available alongside the closed-form delay.
    """
    tb = timing.t_block
    chain = chain or Chain(tb, seed)
    protocol = protocol or Protocol(chain, [b.user_id for b in inst.bids], config, seed)
    silent = set(silent)
    start = chain.now
    formula = end_to_end_delay(tb, timing.t_ann, timing.t_bidding, timing.t_csopt, timing.t_task)
    open_at = start + max(tb, timing.t_ann)
    close_at = open_at + timing.t_bidding
    task_deadline = close_at + timing.t_csopt + tb + timing.t_task
    if deadline is None:
        deadline = task_deadline + 2 * tb
    elif deadline < start:
        raise ValueError("deadline lies in the past")
    rr = protocol.register_request({"tasks": sorted(inst.task_ids)}, deadline)
    auction, mapping = protocol.open_auction(inst, (open_at, close_at), task_deadline,
                                             t_csopt=timing.t_csopt, rr=rr)
    chain.mine_until(open_at)
    for b in sorted(inst.bids, key=lambda b: b.user_id):
        protocol.bid(auction, mapping[b.user_id], b, at=open_at)
    while auction.status == "open":
        chain.mine_block()
    if auction.status == "closed":
        done_at = auction.closed_at + timing.t_task
        by_pseudonym = {p: u for u, p in mapping.items()}
        for p in sorted(auction.mup.allocation):
            if by_pseudonym[p] in silent:
                continue
            protocol.submit_data(auction, p, digest(f"data:{addr_hex(p)}".encode()), at=done_at)
    chain.mine_until(deadline + 2 * tb)
    completed = auction.da_created_at
    return ProtocolRun(chain, protocol, rr, auction, mapping, formula, completed, deadline)
