import io
import socket
import threading

import numpy as np
import numpy.testing as npt
import pytest

from nsmi.denoiser import ExternalDenoiser, GaussianPrior, gaussian_predict_eps
from nsmi.errors import (
    ConnectionLostError,
    DenoiserTimeoutError,
    ParameterError,
    ProtocolError,
    RemoteDenoiserError,
    ShapeError,
)
from nsmi.protocol import (
    DenoiserClient,
    StubDenoiserServer,
    decode_request,
    decode_response,
    encode_error_response,
    encode_request,
    encode_response,
    parse_endpoint,
    reference_eps,
    reference_vectors,
)
from nsmi.schedule import build_linear_schedule


def reader_of(data: bytes):
    return io.BytesIO(data).read


def test_request_round_trip():
    rng = np.random.default_rng(0)
    x_t = rng.standard_normal((5, 7)).astype(np.float32)
    cond = rng.standard_normal((5, 7)).astype(np.float32)
    for condition in (None, cond):
        blob = encode_request(x_t, 42, condition)
        out_x, out_t, out_c = decode_request(reader_of(blob))
        assert out_t == 42
        npt.assert_array_equal(out_x, x_t)
        if condition is None:
            assert out_c is None
        else:
            npt.assert_array_equal(out_c, cond)


def test_request_validation():
    with pytest.raises(ShapeError):
        encode_request(np.zeros(4), 1)
    with pytest.raises(ShapeError):
        encode_request(np.zeros((2, 2)), 1, condition=np.zeros((3, 2)))
    with pytest.raises(ParameterError):
        encode_request(np.zeros((2, 2)), -1)


def test_decode_request_eof_and_garbage():
    assert decode_request(reader_of(b"")) is None
    with pytest.raises(ConnectionLostError):
        decode_request(reader_of(b"NSM"))
    with pytest.raises(ProtocolError) as info:
        decode_request(reader_of(b"JUNKJUNKJUNKJUNKJUNK"))
    assert info.value.offending_bytes.startswith(b"JUNK")
    # wrong version
    blob = bytearray(encode_request(np.zeros((1, 1), np.float32), 1))
    blob[4] = 9
    with pytest.raises(ProtocolError):
        decode_request(reader_of(bytes(blob)))


def test_response_round_trip():
    eps = np.arange(6, dtype=np.float32).reshape(2, 3)
    out = decode_response(reader_of(encode_response(eps)), 2, 3)
    npt.assert_array_equal(out, eps)

    with pytest.raises(RemoteDenoiserError, match="boom"):
        decode_response(reader_of(encode_error_response("boom")), 2, 3)

    with pytest.raises(ProtocolError):
        decode_response(reader_of(b"WAT?" + bytes(3)), 2, 3)
    with pytest.raises(ConnectionLostError):
        decode_response(reader_of(encode_response(eps)[:10]), 2, 3)


def test_parse_endpoint():
    assert parse_endpoint("localhost:9000") == ("localhost", 9000)
    assert parse_endpoint(":8000") == ("127.0.0.1", 8000)
    with pytest.raises(ParameterError):
        parse_endpoint("nope")
    with pytest.raises(ParameterError):
        parse_endpoint("host:port")


def test_loopback_zero_server():
    with StubDenoiserServer(lambda x, t, c: np.zeros_like(x)) as server:
        with DenoiserClient(server.endpoint, timeout=5.0) as client:
            out = client.predict_eps(np.ones((3, 3)), 5)
            npt.assert_array_equal(out, np.zeros((3, 3)))


def test_loopback_matches_in_process_gaussian():
    s = build_linear_schedule(10, 0.01, 0.2)
    prior = GaussianPrior(mean=0.3, var=0.5)

    def handler(x_t, t, condition):
        return gaussian_predict_eps(prior, s, np.asarray(x_t, np.float64), t)

    rng = np.random.default_rng(3)
    x_t = rng.standard_normal((8, 6))
    with StubDenoiserServer(handler) as server:
        with DenoiserClient(server.endpoint, timeout=5.0) as client:
            den = ExternalDenoiser(client)
            remote = den.predict_eps(x_t, 7)
            again = den.predict_eps(x_t, 7)
    local = gaussian_predict_eps(prior, s, x_t.astype(np.float32).astype(np.float64), 7)
    # equality is at float32 resolution: the wire carries f32 both ways
    npt.assert_array_equal(remote, local.astype(np.float32).astype(np.float64))
    npt.assert_array_equal(remote, again)


def test_handler_exception_becomes_remote_error():
    def handler(x_t, t, condition):
        raise ValueError("bad weights")

    with StubDenoiserServer(handler) as server:
        with DenoiserClient(server.endpoint, timeout=5.0) as client:
            with pytest.raises(RemoteDenoiserError, match="bad weights"):
                client.predict_eps(np.ones((2, 2)), 1)


def test_client_rejects_malformed_response_header():
    def bad_server(listener, payload):
        conn, _ = listener.accept()
        with conn:
            conn.recv(65536)
            conn.sendall(payload)

    listener = socket.create_server(("127.0.0.1", 0))
    port = listener.getsockname()[1]
    thread = threading.Thread(
        target=bad_server, args=(listener, b"GARBAGE"), daemon=True
    )
    thread.start()
    with DenoiserClient(f"127.0.0.1:{port}", timeout=5.0) as client:
        with pytest.raises(ProtocolError) as info:
            client.predict_eps(np.ones((2, 2)), 1)
    assert info.value.offending_bytes == b"GARBAGE"
    listener.close()


def test_client_connection_lost_mid_response():
    def closing_server(listener):
        conn, _ = listener.accept()
        conn.recv(65536)
        conn.close()

    listener = socket.create_server(("127.0.0.1", 0))
    port = listener.getsockname()[1]
    threading.Thread(target=closing_server, args=(listener,), daemon=True).start()
    with DenoiserClient(f"127.0.0.1:{port}", timeout=5.0) as client:
        with pytest.raises(ConnectionLostError):
            client.predict_eps(np.ones((2, 2)), 1)
    listener.close()


def test_client_timeout():
    listener = socket.create_server(("127.0.0.1", 0))
    port = listener.getsockname()[1]

    def silent_server():
        conn, _ = listener.accept()
        with conn:
            conn.recv(65536)
            threading.Event().wait(2.0)

    threading.Thread(target=silent_server, daemon=True).start()
    with DenoiserClient(f"127.0.0.1:{port}", timeout=0.2) as client:
        with pytest.raises(DenoiserTimeoutError):
            client.predict_eps(np.ones((2, 2)), 1)
    listener.close()


def test_client_connect_refused():
    listener = socket.create_server(("127.0.0.1", 0))
    port = listener.getsockname()[1]
    listener.close()  # nothing listens here any more
    with pytest.raises(ConnectionLostError):
        DenoiserClient(f"127.0.0.1:{port}", timeout=1.0).connect()


def test_reference_vectors_self_consistent():
    vectors = reference_vectors()
    assert len(vectors) >= 4
    with StubDenoiserServer(reference_eps) as server:
        for vec in vectors:
            request = bytes.fromhex(vec["request"])
            expected = bytes.fromhex(vec["response"])
            with socket.create_connection((server.host, server.port), 5.0) as sock:
                sock.sendall(request)
                got = b""
                while len(got) < len(expected):
                    chunk = sock.recv(len(expected) - len(got))
                    if not chunk:
                        break
                    got += chunk
            assert got == expected, vec["name"]


def test_reference_eps_values_are_f32_exact():
    x = np.array([[1.0, -2.0]], dtype=np.float32)
    c = np.array([[4.0, 0.5]], dtype=np.float32)
    out = reference_eps(x, 9, c)  # 9 mod 7 = 2 -> bias 0.0
    npt.assert_array_equal(out, np.array([[1.5, -0.875]], dtype=np.float32))
    out_uncond = reference_eps(x, 1)  # bias -0.125
    npt.assert_array_equal(out_uncond, np.array([[0.375, -1.125]], dtype=np.float32))
