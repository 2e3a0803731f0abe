from __future__ import annotations

import asyncio
import base64
import hashlib
import logging
import random
import string

import pytest

from rda.errors import ObsAuthError, ObsConnectError, ObsProtocolError
from rda.mock_obs import MockObsServer
from rda.obs import ConnState, ObsClient, compute_auth

from conftest import run


class TestComputeAuth:
    # Golden values computed with command-line `openssl dgst -sha256 -binary`
    # piped through `base64`, before this module existed.
    def test_empty_triple_golden(self):
        assert compute_auth("", "", "") == "XEB0z23rR/W2r5xf4+C70OQrlZb+iKxU1ca275h+DyA="

    def test_known_password_golden(self):
        assert (
            compute_auth(
                "sup3rs3cr3t",
                "cmRhLW1vY2stc2FsdC0wMQ==",
                "cmRhLW1vY2stY2hhbGxlbmdlLTAx",
            )
            == "Ahn/L+c2FcW1y2gPQu6tY9htH3PZ6oYQs/F1bwwmhpc="
        )

    def test_deterministic(self):
        a = compute_auth("pw", "c2FsdA==", "Y2hhbGxlbmdl")
        b = compute_auth("pw", "c2FsdA==", "Y2hhbGxlbmdl")
        assert a == b

    def test_hundred_random_triples_match_oracle(self):
        # Oracle: the chained-digest construction assembled step by step,
        # independent of the implementation under test.
        def oracle(password: str, salt: str, challenge: str) -> str:
            stage1 = hashlib.sha256()
            stage1.update(password.encode())
            stage1.update(salt.encode())
            stage1_b64 = base64.b64encode(stage1.digest()).decode()
            stage2 = hashlib.sha256()
            stage2.update(stage1_b64.encode())
            stage2.update(challenge.encode())
            return base64.b64encode(stage2.digest()).decode()

        rng = random.Random(20250430)
        alphabet = string.ascii_letters + string.digits + string.punctuation
        for _ in range(100):
            password = "".join(rng.choices(alphabet, k=rng.randint(0, 24)))
            salt = base64.b64encode(rng.randbytes(16)).decode()
            challenge = base64.b64encode(rng.randbytes(16)).decode()
            assert compute_auth(password, salt, challenge) == oracle(
                password, salt, challenge
            )


class TestHandshake:
    def test_no_auth_path(self):
        async def scenario():
            async with MockObsServer() as server:
                client = ObsClient(server.url)
                await client.connect()
                assert client.state == ConnState.IDENTIFIED
                await client.close()

        run(scenario())

    def test_correct_password(self):
        async def scenario():
            async with MockObsServer(password="sup3rs3cr3t") as server:
                client = ObsClient(server.url, password="sup3rs3cr3t")
                await client.connect()
                assert client.state == ConnState.IDENTIFIED
                await client.close()

        run(scenario())

    def test_wrong_password(self):
        async def scenario():
            async with MockObsServer(password="right") as server:
                client = ObsClient(server.url, password="wrong")
                with pytest.raises(ObsAuthError):
                    await client.connect()
                assert client.state == ConnState.DISCONNECTED

        run(scenario())

    def test_missing_password_when_required(self):
        async def scenario():
            async with MockObsServer(password="right") as server:
                client = ObsClient(server.url)
                with pytest.raises(ObsAuthError):
                    await client.connect()

        run(scenario())

    def test_rpc_version_mismatch(self):
        async def scenario():
            async with MockObsServer(rpc_version=2) as server:
                client = ObsClient(server.url)
                with pytest.raises(ObsProtocolError):
                    await client.connect()

        run(scenario())

    def test_unreachable_server(self):
        async def scenario():
            client = ObsClient("ws://127.0.0.1:1", connect_timeout=1.0)
            with pytest.raises(ObsConnectError):
                await client.connect()

        run(scenario())

    def test_bad_url_rejected(self):
        with pytest.raises(ObsConnectError):
            ObsClient("http://127.0.0.1:4455")


class TestRecording:
    def test_start_stop_cycle(self, tmp_path):
        async def scenario():
            async with MockObsServer(record_dir=tmp_path / "rec") as server:
                client = ObsClient(server.url)
                await client.connect()
                handle = await client.start_record()
                assert handle.active
                assert server.recording
                handle = await client.stop_record()
                assert not handle.active
                assert handle.output_path is not None
                assert handle.output_path.endswith(".mkv")
                await client.close()

        run(scenario())

    def test_double_start_is_local_error(self, tmp_path):
        async def scenario():
            async with MockObsServer(record_dir=tmp_path) as server:
                client = ObsClient(server.url)
                await client.connect()
                await client.start_record()
                with pytest.raises(ObsProtocolError):
                    await client.start_record()
                await client.close()

        run(scenario())

    def test_server_side_already_recording_surfaces(self, tmp_path):
        async def scenario():
            async with MockObsServer(record_dir=tmp_path) as server:
                first = ObsClient(server.url)
                second = ObsClient(server.url)
                await first.connect()
                await second.connect()
                await first.start_record()
                with pytest.raises(ObsProtocolError, match="code 500"):
                    await second.start_record()
                await first.close()
                await second.close()

        run(scenario())

    def test_stop_when_idle_is_error(self):
        async def scenario():
            async with MockObsServer() as server:
                client = ObsClient(server.url)
                await client.connect()
                with pytest.raises(ObsProtocolError):
                    await client.stop_record()
                await client.close()

        run(scenario())

    def test_request_requires_identified(self):
        client = ObsClient("ws://127.0.0.1:4455")

        async def scenario():
            with pytest.raises(ObsProtocolError):
                await client.request("StartRecord")

        run(scenario())

    def test_missing_output_path_warns(self, tmp_path, caplog):
        async def scenario():
            async with MockObsServer(
                record_dir=tmp_path, omit_output_path=True
            ) as server:
                client = ObsClient(server.url)
                await client.connect()
                await client.start_record()
                with caplog.at_level(logging.WARNING, logger="rda.obs"):
                    handle = await client.stop_record()
                assert handle.output_path is None
                assert not handle.active
                await client.close()

        run(scenario())
        assert any("outputPath" in r.message for r in caplog.records)

    def test_request_timeout(self):
        async def scenario():
            async with MockObsServer(mute_requests=True) as server:
                client = ObsClient(server.url, request_timeout=0.3)
                await client.connect()
                with pytest.raises(ObsConnectError):
                    await client.request("GetVersion")
                await client.close()

        run(scenario())


class TestCorrelation:
    def test_shuffled_responses_resolve_to_their_requests(self):
        async def scenario():
            async with MockObsServer(shuffle_batch=16, shuffle_seed=7) as server:
                client = ObsClient(server.url)
                await client.connect()
                payloads = [{"n": i} for i in range(16)]
                results = await asyncio.gather(
                    *(client.request("Probe", p) for p in payloads)
                )
                assert [r["echo"] for r in results] == payloads
                await client.close()

        run(scenario())

    def test_many_rounds_random_order(self):
        async def scenario():
            async with MockObsServer(shuffle_batch=8, shuffle_seed=99) as server:
                client = ObsClient(server.url)
                await client.connect()
                for round_no in range(5):
                    payloads = [{"round": round_no, "n": i} for i in range(8)]
                    results = await asyncio.gather(
                        *(client.request("Probe", p) for p in payloads)
                    )
                    assert [r["echo"] for r in results] == payloads
                await client.close()

        run(scenario())

    def test_disconnect_fires_callback_and_fails_pending(self):
        async def scenario():
            server = MockObsServer(mute_requests=True)
            await server.start()
            client = ObsClient(server.url, request_timeout=5.0)
            dropped = asyncio.Event()

            async def on_drop():
                dropped.set()

            client.on_disconnect = on_drop
            await client.connect()
            pending = asyncio.create_task(client.request("GetVersion"))
            await asyncio.sleep(0.1)
            await server.stop()  # hard drop
            with pytest.raises(ObsConnectError):
                await pending
            await asyncio.wait_for(dropped.wait(), 2.0)
            assert client.state == ConnState.DISCONNECTED

        run(scenario())
