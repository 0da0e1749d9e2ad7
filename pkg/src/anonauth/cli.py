"""Single entry point: key ceremony, demo sessions, attacks, analysis,
revocation demo, and simulation, all reproducible from a written manifest.

Exit codes: 0 success/accepted, 2 parameter error, 3 rejected/revoked,
4 attack infeasible.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__, adversary, analysis, keymgmt, protocol, revocation, simulation
from .envelopes import generate_seal_keypair
from .numtheory import BlumModulus, Rng, generate_blum_modulus
from .protocol import Outcome, SessionConfig
from .zkp import Variant

EXIT_OK = 0
EXIT_PARAM = 2
EXIT_REJECTED = 3
EXIT_INFEASIBLE = 4


def _write_manifest(out_dir: Path, subcommand: str, params: dict, outputs: list[str]) -> None:
    manifest = {
        "subcommand": subcommand,
        "params": params,
        "seed": params.get("seed"),
        "artifact_version": __version__,
        "outputs": outputs,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2))


def _load_bundle(bundle_dir: Path):
    root = json.loads((bundle_dir / "root.json").read_text())
    obu_files = sorted(bundle_dir.glob("obu_*.json"))
    rsu_files = sorted(bundle_dir.glob("rsu_*.json"))
    obus = [keymgmt.obu_credential_from_json(f.read_text()) for f in obu_files]
    rsus = [keymgmt.rsu_credential_from_json(f.read_text()) for f in rsu_files]
    return bytes.fromhex(root["root_public_key"]), obus, rsus


# ----------------------------------------------------------- implementations
# Each runs from a plain params dict so `rerun` can replay a manifest.


def run_keygen(params: dict, out_dir: Path) -> list[str]:
    q, n, k = params["groups"], params["pool_size"], params["secrets_per_member"]
    modulus = generate_blum_modulus(params["bit_length"], params["seed"])
    rng = Rng(params["seed"] ^ 0xCE5E)
    kdc = keymgmt.Kdc(seed=params["seed"] ^ 0x5119)
    groups = keymgmt.form_groups(q, n, k, modulus, rng)
    outputs = []

    root_file = out_dir / "root.json"
    root_file.write_text(
        json.dumps(
            {
                "root_public_key": kdc.root_public_key().hex(),
                "modulus": str(modulus.m),
                "bit_length": modulus.bit_length,
            },
            sort_keys=True,
        )
    )
    outputs.append(root_file.name)

    iv = 1
    for g in groups:
        for j in range(1, params["obus_per_group"] + 1):
            cred = keymgmt.provision_obu(kdc, g, j, iv, modulus)
            iv += 1
            f = out_dir / f"obu_{g.group_id}_{j}.json"
            f.write_text(keymgmt.obu_credential_to_json(cred))
            outputs.append(f.name)
    for rid in range(params["rsus"]):
        priv, pub = generate_seal_keypair(rng)
        cert = kdc.issue_certificate(rid, pub)
        cred = keymgmt.provision_rsu(groups, rid, cert, priv, modulus)
        f = out_dir / f"rsu_{rid}.json"
        f.write_text(keymgmt.rsu_credential_to_json(cred))
        outputs.append(f.name)
    return outputs


def run_auth_demo(params: dict, out_dir: Path) -> tuple[list[str], protocol.AuthResult]:
    root, obus, rsus = _load_bundle(Path(params["bundle"]))
    obu_cred, rsu_cred = obus[0], rsus[0]
    config = SessionConfig(
        alpha=params["alpha"],
        mu=params["mu"],
        k=len(obu_cred.master_key),
        h=params["h"],
        n=len(obu_cred.pool_witnesses),
        serv_id=params["serv_id"],
        variant=Variant.HARDENED if params.get("hardened") else Variant.BASIC,
    )
    rng = Rng(params["seed"])
    rsu = protocol.Rsu(rsu_cred, rng.split())
    obu = protocol.Obu(obu_cred, root, rng.split())
    if params.get("revoked_iv") is not None:
        revocation.broadcast_revocation(params["revoked_iv"], 0, [rsu.table])
    result, transcript = protocol.run_full_session(obu, rsu, config)
    out = out_dir / "transcript.jsonl"
    out.write_text("\n".join(frame.hex() for frame in transcript.frames) + "\n")
    (out_dir / "result.json").write_text(
        json.dumps(
            {
                "outcome": result.outcome.value,
                "verified_count": result.verified_count,
                "alpha": result.alpha,
            },
            sort_keys=True,
        )
    )
    return [out.name, "result.json"], result


def run_analyze(params: dict, out_dir: Path) -> list[str]:
    outputs = []
    if params.get("figure"):
        fig = params["figure"]
        f = out_dir / f"figure_{fig}.csv"
        f.write_text(analysis.figure_csv(fig))
        outputs.append(f.name)
    if params.get("mc_formula"):
        formula = params["mc_formula"]
        trials, seed = params["trials"], params["seed"]
        if formula == "p_cheater":
            rep = analysis.mc_cheater(params["k"], params["h"], trials, seed)
        elif formula == "p_mu":
            rep = analysis.mc_bundle_cheater(
                params["k"], params["h"], params["n"], params["mu"], params["mu"], trials, seed
            )
        elif formula == "p_leak":
            rep = analysis.mc_leak(params["n"], params["k"], params["mu"], trials, seed)
        elif formula == "p_missed":
            rep = analysis.mc_sequence_collision(
                params["n"], params["k"], params["mu"], trials, seed
            )
        else:
            raise click.BadParameter(f"unknown formula {formula!r}")
        f = out_dir / "report.csv"
        f.write_text(analysis.CSV_HEADER + "\n" + rep.csv_row() + "\n")
        outputs.append(f.name)
    return outputs


def _demo_deployment(seed: int, n: int, k: int, modulus=None):
    if modulus is None:
        modulus = generate_blum_modulus(24, seed)
    rng = Rng(seed ^ 0xD37)
    kdc = keymgmt.Kdc(seed=seed ^ 0x151)
    groups = keymgmt.form_groups(1, n, k, modulus, rng)
    priv, pub = generate_seal_keypair(rng)
    cert = kdc.issue_certificate(0, pub)
    rsu_cred = keymgmt.provision_rsu(groups, 0, cert, priv, modulus)
    obu_cred = keymgmt.provision_obu(kdc, groups[0], 1, iv=seed & 0xFFFF | 1, modulus=modulus)
    return kdc, groups, obu_cred, rsu_cred, modulus


def run_attack(params: dict, out_dir: Path) -> tuple[list[str], int]:
    """Returns (outputs, exit code)."""
    mode = params["mode"]
    seed = params["seed"]
    outputs = []
    if mode == "cheater":
        rep = analysis.mc_cheater(params["k"], params["h"], params["trials"], seed)
        f = out_dir / "cheater_report.csv"
        f.write_text(analysis.CSV_HEADER + "\n" + rep.csv_row() + "\n")
        return [f.name], EXIT_OK

    # record / simulate share a live deployment on a deliberately weak
    # modulus; commitment collisions are what make replay matrices fill
    n, k, h, mu = params["n"], params["k"], params["h"], params["mu"]
    weak = BlumModulus(m=21, bit_length=5, p=3, q=7)
    kdc, groups, obu_cred, rsu_cred, modulus = _demo_deployment(seed, n, k, modulus=weak)
    rng = Rng(seed)
    config = SessionConfig(alpha=min(mu, 2), mu=mu, k=k, h=h, n=n, serv_id="INFO")
    rsu = protocol.Rsu(rsu_cred, rng.split())
    obu = protocol.Obu(obu_cred, kdc.root_public_key(), rng.split())
    transcripts = []
    for _ in range(params["sessions"]):
        _result, transcript = protocol.run_full_session(obu, rsu, config)
        transcripts.append(transcript)
    tap = (
        adversary.TapLevel.CIPHERTEXT_ONLY
        if params.get("tap") == "ciphertext"
        else adversary.TapLevel.ROUND_PLAINTEXT
    )
    corpus = adversary.observe_sessions(transcripts, tap)

    if mode == "record":
        f = out_dir / "corpus.json"
        f.write_text(
            json.dumps(
                [
                    {
                        "secret_ids": list(obs.secret_ids),
                        "rounds": [
                            {"w": str(rd.w), "challenge": list(rd.challenge), "y": str(rd.y)}
                            for rd in obs.rounds
                        ],
                    }
                    for obs in corpus
                ],
                sort_keys=True,
            )
        )
        return [f.name], EXIT_OK

    # mode == "simulate"
    matrices = adversary.build_simulators(corpus, n, k)
    if not matrices:
        click.echo("no usable observations at this tap level: attack infeasible")
        return [], EXIT_INFEASIBLE
    attack_rng = Rng(seed ^ 0xA77)
    sets_rng = Rng(seed ^ 0x5E75)
    sessions = []
    for _ in range(params["sessions"]):
        iv = sets_rng.randbits(32)
        sessions.append(revocation.next_sequence(iv, 0, n, k, mu))
    pool_witnesses = [s * s % modulus.m for s in groups[0].pool_secrets]
    hardened_polys = None
    if params.get("variant") == "hardened":
        hardened_polys = [
            [
                protocol._session_poly(attack_rng.randbytes(16), b"\0" * 8, b"bundle", i, k)
                for i in range(mu)
            ]
            for _ in sessions
        ]
    rep = adversary.simulator_attack(
        matrices,
        pool_witnesses,
        sessions,
        k,
        h,
        alpha=min(mu, 2),
        m=modulus.m,
        verifier_rng=attack_rng,
        hardened_polys=hardened_polys,
    )
    f = out_dir / "attack_report.csv"
    f.write_text(
        "kind,trials,successes,frequency,memory_modeled,memory_measured\n"
        f"{rep.kind},{rep.trials},{rep.successes},{rep.frequency:.6f},"
        f"{rep.memory_bytes_modeled},{rep.memory_bytes_measured}\n"
    )
    return [f.name], EXIT_OK


def run_revoke_demo(params: dict, out_dir: Path) -> tuple[list[str], int]:
    seed = params["seed"]
    n, k, h, mu = params["n"], params["k"], params["h"], params["mu"]
    kdc, groups, obu_cred, rsu_cred, _modulus = _demo_deployment(seed, n, k)
    rng = Rng(seed)
    config = SessionConfig(alpha=min(mu, 2), mu=mu, k=k, h=h, n=n, serv_id="INFO")
    rsu = protocol.Rsu(rsu_cred, rng.split())
    obu = protocol.Obu(obu_cred, kdc.root_public_key(), rng.split())

    before, _ = protocol.run_full_session(obu, rsu, config)
    revocation.broadcast_revocation(obu_cred.iv, 0, [rsu.table], reason="demo")
    after, _ = protocol.run_full_session(obu, rsu, config)

    record = revocation.encode_broadcast(obu_cred.iv, 0, "demo", rsu.table.version)
    f = out_dir / "broadcast.json"
    f.write_text(record)
    (out_dir / "outcomes.json").write_text(
        json.dumps(
            {"before": before.outcome.value, "after": after.outcome.value},
            sort_keys=True,
        )
    )
    click.echo(f"before broadcast: {before.outcome.value}; after: {after.outcome.value}")
    ok = before.outcome is Outcome.ACCEPTED and after.outcome is Outcome.REJECTED_REVOKED
    return [f.name, "outcomes.json"], EXIT_OK if ok else EXIT_REJECTED


def run_simulate(params: dict, out_dir: Path) -> list[str]:
    config = simulation.SimConfig(
        obus_per_rsu=params.get("load", 10),
        speed_mps=params.get("speed", 20.0),
        duration_s=params.get("duration", 40.0),
    )
    dimension = params["sweep"]
    values = (
        simulation.DEFAULT_GRID_LOADS if dimension == "load" else simulation.DEFAULT_GRID_SPEEDS
    )
    if params.get("values"):
        values = params["values"]
    rows = simulation.sweep(config, dimension, values, params["seed"])
    f = out_dir / f"sweep_{dimension}.csv"
    f.write_text(simulation.sweep_csv(rows, dimension))
    return [f.name]


# ------------------------------------------------------------------ click


@click.group()
def main():
    """Anonymous group authentication toolkit."""


def _out_dir_option(f):
    return click.option(
        "--out-dir", type=click.Path(path_type=Path), default=Path("out"), show_default=True
    )(f)


@main.command()
@click.option("--groups", "-q", type=int, default=2, show_default=True)
@click.option("--pool-size", "-n", type=int, default=8, show_default=True)
@click.option("--secrets-per-member", "-k", type=int, default=2, show_default=True)
@click.option("--bit-length", type=int, default=32, show_default=True)
@click.option("--obus-per-group", type=int, default=2, show_default=True)
@click.option("--rsus", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True, envvar="ANONAUTH_SEED")
@_out_dir_option
def keygen(**kw):
    """Run the key ceremony and write provisioning bundles."""
    out_dir = kw.pop("out_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        outputs = run_keygen(kw, out_dir)
    except (keymgmt.InvalidParameters, ValueError) as exc:
        click.echo(f"parameter error: {exc}", err=True)
        sys.exit(EXIT_PARAM)
    _write_manifest(out_dir, "keygen", kw, outputs)
    click.echo(f"wrote {len(outputs)} bundle files to {out_dir}")


@main.command("auth-demo")
@click.option("--bundle", type=click.Path(path_type=Path), required=True)
@click.option("--alpha", type=int, default=2, show_default=True)
@click.option("--mu", type=int, default=5, show_default=True)
@click.option("--h", "h", type=int, default=2, show_default=True)
@click.option("--serv-id", default="INFO", show_default=True)
@click.option("--hardened", is_flag=True, default=False)
@click.option("--revoked-iv", type=int, default=None)
@click.option("--seed", type=int, default=1, show_default=True, envvar="ANONAUTH_SEED")
@_out_dir_option
def auth_demo(**kw):
    """Run one live session from a provisioning bundle."""
    out_dir = kw.pop("out_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    kw["bundle"] = str(kw["bundle"])
    try:
        outputs, result = run_auth_demo(kw, out_dir)
    except (ValueError, protocol.UnsupportedAlpha) as exc:
        click.echo(f"parameter error: {exc}", err=True)
        sys.exit(EXIT_PARAM)
    _write_manifest(out_dir, "auth-demo", kw, outputs)
    click.echo(f"{result.outcome.value} verified_count={result.verified_count}")
    sys.exit(EXIT_OK if result.outcome is Outcome.ACCEPTED else EXIT_REJECTED)


@main.command()
@click.option("--figure", type=click.Choice(["10a", "10b", "11", "12", "13"]), default=None)
@click.option("--mc-formula", type=click.Choice(["p_cheater", "p_mu", "p_leak", "p_missed"]), default=None)
@click.option("--k", "k", type=int, default=2)
@click.option("--h", "h", type=int, default=1)
@click.option("--n", "n", type=int, default=6)
@click.option("--mu", type=int, default=2)
@click.option("--trials", type=int, default=10000, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True, envvar="ANONAUTH_SEED")
@_out_dir_option
def analyze(**kw):
    """Emit figure series or a Monte Carlo probability report."""
    out_dir = kw.pop("out_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    if not kw.get("figure") and not kw.get("mc_formula"):
        click.echo("parameter error: need --figure or --mc-formula", err=True)
        sys.exit(EXIT_PARAM)
    try:
        outputs = run_analyze(kw, out_dir)
    except (analysis.ParameterOverflow, analysis.UnknownFigure, ValueError) as exc:
        click.echo(f"parameter error: {exc}", err=True)
        sys.exit(EXIT_PARAM)
    _write_manifest(out_dir, "analyze", kw, outputs)
    click.echo(f"wrote {', '.join(outputs)}")


@main.command()
@click.argument("mode", type=click.Choice(["cheater", "record", "simulate"]))
@click.option("--k", "k", type=int, default=2, show_default=True)
@click.option("--h", "h", type=int, default=1, show_default=True)
@click.option("--n", "n", type=int, default=4, show_default=True)
@click.option("--mu", type=int, default=2, show_default=True)
@click.option("--trials", type=int, default=10000, show_default=True)
@click.option("--sessions", type=int, default=200, show_default=True)
@click.option("--variant", type=click.Choice(["basic", "hardened"]), default="basic")
@click.option("--tap", type=click.Choice(["rounds", "ciphertext"]), default="rounds")
@click.option("--seed", type=int, default=1, show_default=True, envvar="ANONAUTH_SEED")
@_out_dir_option
def attack(mode, **kw):
    """Run a threat-model experiment and emit an attack report."""
    out_dir = kw.pop("out_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    kw["mode"] = mode
    try:
        outputs, code = run_attack(kw, out_dir)
    except ValueError as exc:
        click.echo(f"parameter error: {exc}", err=True)
        sys.exit(EXIT_PARAM)
    _write_manifest(out_dir, "attack", kw, outputs)
    sys.exit(code)


@main.command("revoke-demo")
@click.option("--k", "k", type=int, default=2, show_default=True)
@click.option("--h", "h", type=int, default=2, show_default=True)
@click.option("--n", "n", type=int, default=6, show_default=True)
@click.option("--mu", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True, envvar="ANONAUTH_SEED")
@_out_dir_option
def revoke_demo(**kw):
    """Broadcast a revocation and show the replayed session being denied."""
    out_dir = kw.pop("out_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        outputs, code = run_revoke_demo(kw, out_dir)
    except ValueError as exc:
        click.echo(f"parameter error: {exc}", err=True)
        sys.exit(EXIT_PARAM)
    _write_manifest(out_dir, "revoke-demo", kw, outputs)
    sys.exit(code)


@main.command()
@click.option("--sweep", type=click.Choice(["load", "speed"]), default="load", show_default=True)
@click.option("--load", type=int, default=10, show_default=True)
@click.option("--speed", type=float, default=20.0, show_default=True)
@click.option("--duration", type=float, default=40.0, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True, envvar="ANONAUTH_SEED")
@_out_dir_option
def simulate(**kw):
    """Sweep the road-network simulation and emit metric CSVs."""
    out_dir = kw.pop("out_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        outputs = run_simulate(kw, out_dir)
    except simulation.InvalidConfig as exc:
        click.echo(f"parameter error: {exc}", err=True)
        sys.exit(EXIT_PARAM)
    _write_manifest(out_dir, "simulate", kw, outputs)
    click.echo(f"wrote {', '.join(outputs)}")


@main.command()
@click.option("--manifest", type=click.Path(path_type=Path), required=True)
@_out_dir_option
def rerun(manifest: Path, out_dir: Path):
    """Re-execute a recorded run; outputs are bit-identical to the original."""
    spec = json.loads(manifest.read_text())
    out_dir.mkdir(parents=True, exist_ok=True)
    sub, params = spec["subcommand"], spec["params"]
    if sub == "keygen":
        outputs = run_keygen(params, out_dir)
    elif sub == "auth-demo":
        outputs, _ = run_auth_demo(params, out_dir)
    elif sub == "analyze":
        outputs = run_analyze(params, out_dir)
    elif sub == "attack":
        outputs, _ = run_attack(params, out_dir)
    elif sub == "revoke-demo":
        outputs, _ = run_revoke_demo(params, out_dir)
    elif sub == "simulate":
        outputs = run_simulate(params, out_dir)
    else:
        click.echo(f"parameter error: unknown subcommand {sub!r}", err=True)
        sys.exit(EXIT_PARAM)
    _write_manifest(out_dir, sub, params, outputs)
    click.echo(f"reproduced {', '.join(outputs)}")


if __name__ == "__main__":
    main()
