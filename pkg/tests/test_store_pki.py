import os
import threading
from datetime import timedelta
from functools import partial
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer

import pytest

from akenti.certs import CAInfo
from akenti.pki import CertificateAuthority, UnknownCA, pki_issue, pki_verify, revoked_by
from akenti.store import CacheEntry, CertSource, CertStore, HttpFetcher, SourceKind, SourceUnavailable, file_url
from akenti.xmlcodec import write_certificate

from conftest import CA_DN, NOW


class ListingHandler(SimpleHTTPRequestHandler):
    """Directory GET answers with bare file names, one per line."""

    def list_directory(self, path):
        body = "".join(f"{n}\n" for n in sorted(os.listdir(path))).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_dir(tmp_path):
    server = ThreadingHTTPServer(("127.0.0.1", 0), partial(ListingHandler, directory=str(tmp_path)))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield tmp_path, f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


class TestPKI:
    def test_issue_and_verify(self, pki, alice_key):
        ident = pki.issue(CA_DN, "/O=Test/CN=Alice", alice_key.public_text, NOW, NOW + timedelta(days=1))
        ca = pki.cas[CA_DN]
        assert pki_verify(ident, [ca.info()], [], NOW)
        assert not pki_verify(ident, [ca.info()], [], NOW + timedelta(days=2))

    def test_unknown_ca(self, pki, alice_key):
        with pytest.raises(UnknownCA):
            pki.issue("/O=Nobody", "/O=Test/CN=Alice", alice_key.public_text, NOW, NOW + timedelta(days=1))

    def test_untrusted_ca(self, pki, alice_key, bob_key):
        ident = pki.issue(CA_DN, "/O=Test/CN=Alice", alice_key.public_text, NOW, NOW + timedelta(days=1))
        impostor = CAInfo(ca_dn=CA_DN, ca_public_key=bob_key.public_text)
        assert not pki_verify(ident, [impostor], [], NOW)
        assert not pki_verify(ident, [], [], NOW)

    def test_unregistered_ca_cannot_issue(self, alice_key):
        with pytest.raises(UnknownCA):
            pki_issue(CertificateAuthority("/CN=loose", alice_key), "/CN=x", alice_key.public_text, NOW)

    def test_revocation(self, pki, alice_key):
        ca = pki.cas[CA_DN]
        ident = pki.issue(CA_DN, "/O=Test/CN=Alice", alice_key.public_text, NOW, NOW + timedelta(days=1))
        crl = ca.issue_crl(NOW, NOW + timedelta(days=1), uids=[ident.uid])
        assert not pki_verify(ident, [ca.info()], [crl], NOW)
        assert revoked_by(ident.uid, [crl], {CA_DN: ca.keypair.public_key}, NOW)
        # a CRL past its validity no longer counts
        stale = ca.issue_crl(NOW - timedelta(days=3), NOW - timedelta(days=2), uids=[ident.uid])
        assert pki_verify(ident, [ca.info()], [stale], NOW)


class TestStore:
    def test_file_directory(self, tmp_path, pki, alice_key):
        cert = pki.issue(CA_DN, "/O=Test/CN=Alice", alice_key.public_text, NOW, NOW + timedelta(days=1))
        write_certificate(cert, tmp_path / "a.xml")
        (tmp_path / "junk.xml").write_text("<nope/>")
        (tmp_path / "notes.txt").write_text("ignored")
        store = CertStore()
        got = store.fetch_directory(CertSource(file_url(tmp_path), SourceKind.ID_DIR), NOW)
        assert got == [cert]

    def test_missing_directory(self, tmp_path):
        with pytest.raises(SourceUnavailable):
            CertStore().fetch_directory(CertSource(file_url(tmp_path / "gone"), SourceKind.ATTR_DIR), NOW)

    def test_unsupported_scheme(self):
        with pytest.raises(SourceUnavailable):
            CertStore().fetch_directory(CertSource("ldap://x/y", SourceKind.ATTR_DIR), NOW)

    def test_http_directory(self, http_dir, pki, alice_key):
        root, base = http_dir
        cert = pki.issue(CA_DN, "/O=Test/CN=Alice", alice_key.public_text, NOW, NOW + timedelta(days=1))
        write_certificate(cert, root / "alice cert.xml")
        got = CertStore().fetch_directory(CertSource(base, SourceKind.ID_DIR), NOW)
        assert got == [cert]

    def test_http_unreachable(self):
        store = CertStore(fetchers={"http": HttpFetcher(timeout=0.5)})
        with pytest.raises(SourceUnavailable):
            store.fetch_directory(CertSource("http://127.0.0.1:9/certs", SourceKind.ID_DIR), NOW)

    def test_cache_entry_freshness(self):
        entry = CacheEntry(("u",), (), NOW, 2)
        assert entry.fresh(NOW)
        assert entry.fresh(NOW + timedelta(seconds=1.9))
        assert not entry.fresh(NOW + timedelta(seconds=2))
        assert not entry.fresh(NOW - timedelta(seconds=1))
        assert entry.fresh(NOW + timedelta(seconds=5), ttl=10)
        assert not CacheEntry(("u",), (), NOW, 0).fresh(NOW)

    def test_fetch_counter(self, tmp_path):
        store = CertStore()
        src = CertSource(file_url(tmp_path), SourceKind.ATTR_DIR)
        store.fetch_directory(src, NOW, 10)
        store.fetch_directory(src, NOW + timedelta(seconds=5), 10)
        assert store.fetch_count == 1
        store.fetch_directory(src, NOW + timedelta(seconds=11), 10)
        assert store.fetch_count == 2
        store.clear()
        store.fetch_directory(src, NOW + timedelta(seconds=11), 10)
        assert store.fetch_count == 3

    def test_unavailable_crl_does_not_block(self, tmp_path, pki):
        ca = pki.cas[CA_DN].info(crl_dirs=[file_url(tmp_path / "gone")])
        assert CertStore().crls_for(ca, NOW, 0) == []
