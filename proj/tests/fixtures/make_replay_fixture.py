"""Regenerates the synthetic replay fixture. Output is committed; rerun only to change it."""
import json
import pathlib

HERE = pathlib.Path(__file__).parent / "replay"

CONTRACTS = [
    ("c01", "TokenSale", "buyTokens", "Integer Overflow", "multiplication of amount and price overflows the uint256 total"),
    ("c02", "Lottery", "drawWinner", "Bad Randomness", "winner index derived from block timestamp is predictable by miners"),
    ("c03", "Vault", "withdrawAll", "Access Control", "any caller can drain the vault because owner check is missing"),
    ("c04", "MyToken", "Mytoken", "Typo Constructor", "misspelled constructor name lets anyone become the owner"),
    ("c05", "Exchange", "swap", "Wrong Logic", "fee is subtracted twice so the swap output is wrong"),
    ("c06", "StableCoin", "mint", "Token Devalue", "unbounded minting devalues the token supply"),
    ("c07", "Airdrop", "batchTransfer", "Integer Overflow", "count times value overflows and bypasses the balance check"),
    ("c08", "Dice", "roll", "Bad Randomness", "roll outcome uses blockhash which is predictable"),
    ("c09", "Wallet", "setOwner", "Access Control", "setOwner is public and lacks an onlyOwner modifier"),
    ("c10", "Staking", "claimReward", "Wrong Logic", "reward computed before balance update allows double claims"),
    ("c11", "Crowdfund", "Crowdfunds", "Typo Constructor", "constructor typo leaves the initializer publicly callable"),
    ("c12", "Pool", "burnFrom", "Token Devalue", "burnFrom burns other holders tokens and devalues their stake"),
]

BACKENDS = ["model_a", "model_b", "model_c", "model_d", "model_e"]


def source(name, fn):
    return (
        "pragma solidity ^0.4.24;\n\n"
        f"contract {name} {{\n"
        "    address public owner;\n"
        "    mapping(address => uint256) public balances;\n\n"
        f"    function {fn}(uint256 amount) public {{\n"
        "        balances[msg.sender] += amount;\n"
        "    }\n\n"
        "    function helper() internal view returns (uint256) {\n"
        "        return balances[owner];\n"
        "    }\n"
        "}\n"
    )


def finding(fn, vuln, reason):
    return {"function_name": fn, "vulnerability": vuln, "reason": reason}


def body(findings):
    return json.dumps({"output_list": findings}, indent=2)


# Per backend: list of (contract index -> response kind). Kinds shape the
# output so that voting ties, decoy findings and failures all occur.
def response(backend, cid, name, fn, vuln, desc):
    i = int(cid[1:])
    b = BACKENDS.index(backend)
    decoys = [
        finding("helper", "Wrong Logic", "helper returns the owner balance without checks"),
        finding(fn, "Integer Overflow", "arithmetic on amount is unchecked"),
        finding("transfer", "Access Control", "transfer has no sender validation"),
        finding(fn, "Bad Randomness", "value depends on block data"),
    ]
    correct = finding(fn, vuln, desc)
    crowd = [
        finding("helper", "Wrong Logic", "helper returns the owner balance without checks"),
        finding("helper", "Access Control", "helper exposes the owner balance"),
        finding(fn, "Bad Randomness", "amount depends on block data"),
        finding(fn, "Access Control", "anyone can call it"),
        finding("transfer", "Integer Overflow", "balance addition is unchecked"),
    ]
    # c06: nobody finds it. c03: model_a misses while the others agree.
    # c11: only model_a finds it; the others agree on five decoys.
    if cid == "c06":
        return json.dumps({"output_list": crowd[b:b + 2]})
    if cid == "c03" and b == 0:
        return json.dumps({"output_list": crowd[:2]})
    if cid == "c11":
        return json.dumps({"output_list": [correct] if b == 0 else crowd})
    alias = {
        "Integer Overflow": "integer underflow",
        "Bad Randomness": "weak randomness",
        "Access Control": "unprotected function",
        "Typo Constructor": "constructor typo",
        "Wrong Logic": "logic error",
        "Token Devalue": "token devaluation",
    }[vuln]
    # model_a: strong, plain JSON, correct first on even contracts, second on odd.
    if b == 0:
        items = [correct, decoys[0]] if i % 2 == 0 else [decoys[1], correct, decoys[0]]
        return body(items)
    # model_b: wraps output in a fenced block with a preamble; misses every third contract.
    if b == 1:
        items = [decoys[2], decoys[0]] if i % 3 == 0 else [correct, decoys[2]]
        return "Here is my analysis of the contract.\n```json\n" + body(items) + "\n```\nLet me know if you need more."
    # model_c: uses aliases and qualified names; empty list on c05, garbage on c09.
    if b == 2:
        if cid == "c05":
            return '{"output_list": []}'
        if cid == "c09":
            return "I cannot determine the vulnerabilities {output_list: [function_name: setOwner"
        q = finding(f"{name}.{fn}()", alias, "the " + desc)
        return "Output:\n" + json.dumps({"output_list": [decoys[3], q, decoys[0]]})
    # model_d: weak, mostly decoys, correct only on c01..c04 at rank 3.
    if b == 3:
        items = [decoys[0], decoys[2]]
        if i <= 4:
            items.append(correct)
        return json.dumps({"output_list": items})
    # model_e: no completion for c12 (backend failure), otherwise correct at top.
    if cid == "c12":
        return None
    return "`" * 3 + "\n" + json.dumps({"output_list": [correct, decoys[1]]}) + "\n" + "`" * 3


def main():
    manifest = []
    replay = []
    for cid, name, fn, vuln, desc in CONTRACTS:
        path = f"contracts/{cid}_{name}.sol"
        (HERE / path).write_text(source(name, fn))
        manifest.append({
            "id": cid,
            "source_path": path,
            "dataset_tag": "cve",
            "labels": [{"function_name": fn, "vulnerability_type": vuln, "description": desc}],
        })
        for backend in BACKENDS:
            text = response(backend, cid, name, fn, vuln, desc)
            if text is not None:
                replay.append({"backend_id": backend, "contract_id": cid, "raw_text": text})
    (HERE / "manifest.jsonl").write_text("".join(json.dumps(m) + "\n" for m in manifest))
    (HERE / "replay.jsonl").write_text("".join(json.dumps(r) + "\n" for r in replay))
    registry = {"backends": [
        {"backend_id": b, "kind": "replay", "model_name": b, "replay_file": "replay.jsonl"} for b in BACKENDS
    ]}
    (HERE / "backends.json").write_text(json.dumps(registry, indent=2) + "\n")


if __name__ == "__main__":
    main()
