//! rustls client configuration shared by the HTTP client and the TLS prober.

use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use rustls::client::danger::{HandshakeSignatureValid, ServerCertVerified, ServerCertVerifier};
use rustls::client::{ResolvesClientCert, WebPkiServerVerifier};
use rustls::crypto::{ring, CryptoProvider, WebPkiSupportedAlgorithms};
use rustls::pki_types::pem::PemObject;
use rustls::pki_types::{CertificateDer, PrivateKeyDer, ServerName, UnixTime};
use rustls::sign::CertifiedKey;
use rustls::{ClientConfig, DigitallySignedStruct, RootCertStore, SignatureScheme};

#[derive(Debug, thiserror::Error)]
pub enum TlsSetupError {
    #[error("cannot read {path}: {message}")]
    Pem { path: String, message: String },
    #[error("{0}")]
    Rustls(#[from] rustls::Error),
}

pub(crate) fn provider() -> Arc<CryptoProvider> {
    Arc::new(ring::default_provider())
}

/// A client certificate chain with its private key, loaded from PEM files.
#[derive(Clone)]
pub struct ClientIdentity {
    pub(crate) chain: Vec<CertificateDer<'static>>,
    pub(crate) key: Arc<CertifiedKey>,
}

impl fmt::Debug for ClientIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClientIdentity")
            .field("chain_len", &self.chain.len())
            .finish_non_exhaustive()
    }
}

impl ClientIdentity {
    pub fn load(cert_path: &Path, key_path: &Path) -> Result<Self, TlsSetupError> {
        let pem_err = |path: &Path, e: &dyn fmt::Display| TlsSetupError::Pem {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let chain = CertificateDer::pem_file_iter(cert_path)
            .map_err(|e| pem_err(cert_path, &e))?
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| pem_err(cert_path, &e))?;
        if chain.is_empty() {
            return Err(pem_err(cert_path, &"no certificates found"));
        }
        let key = PrivateKeyDer::from_pem_file(key_path).map_err(|e| pem_err(key_path, &e))?;
        Self::from_der(chain, key)
    }

    pub fn from_der(
        chain: Vec<CertificateDer<'static>>,
        key: PrivateKeyDer<'static>,
    ) -> Result<Self, TlsSetupError> {
        let signing = provider().key_provider.load_private_key(key)?;
        Ok(ClientIdentity {
            key: Arc::new(CertifiedKey::new(chain.clone(), signing)),
            chain,
        })
    }

    /// DER of the end-entity certificate.
    pub fn leaf(&self) -> &CertificateDer<'static> {
        &self.chain[0]
    }
}

pub fn load_roots(path: &Path) -> Result<RootCertStore, TlsSetupError> {
    let mut roots = RootCertStore::empty();
    let certs = CertificateDer::pem_file_iter(path)
        .and_then(|it| it.collect::<Result<Vec<_>, _>>())
        .map_err(|e| TlsSetupError::Pem {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    for cert in certs {
        roots.add(cert)?;
    }
    Ok(roots)
}

/// Offers the identity (if any) and remembers whether the server asked for one.
#[derive(Debug, Default)]
pub(crate) struct RecordingResolver {
    identity: Option<Arc<CertifiedKey>>,
    requested: AtomicBool,
}

impl RecordingResolver {
    pub(crate) fn new(identity: Option<&ClientIdentity>) -> Arc<Self> {
        Arc::new(RecordingResolver {
            identity: identity.map(|i| i.key.clone()),
            requested: AtomicBool::new(false),
        })
    }

    pub(crate) fn was_requested(&self) -> bool {
        self.requested.load(Ordering::SeqCst)
    }
}

impl ResolvesClientCert for RecordingResolver {
    fn resolve(
        &self,
        _root_hint_subjects: &[&[u8]],
        _sigschemes: &[SignatureScheme],
    ) -> Option<Arc<CertifiedKey>> {
        self.requested.store(true, Ordering::SeqCst);
        self.identity.clone()
    }

    fn has_certs(&self) -> bool {
        true
    }
}

/// Accepts any server certificate and keeps a copy of the leaf.
///
/// The auditor observes posture; chain trust against public roots is out of
/// its remit.
#[derive(Debug)]
pub(crate) struct ObservingVerifier {
    algs: WebPkiSupportedAlgorithms,
    seen: Mutex<Option<CertificateDer<'static>>>,
}

impl ObservingVerifier {
    pub(crate) fn new() -> Arc<Self> {
        Arc::new(ObservingVerifier {
            algs: provider().signature_verification_algorithms,
            seen: Mutex::new(None),
        })
    }

    pub(crate) fn leaf(&self) -> Option<CertificateDer<'static>> {
        self.seen.lock().unwrap().clone()
    }
}

impl ServerCertVerifier for ObservingVerifier {
    fn verify_server_cert(
        &self,
        end_entity: &CertificateDer<'_>,
        _intermediates: &[CertificateDer<'_>],
        _server_name: &ServerName<'_>,
        _ocsp_response: &[u8],
        _now: UnixTime,
    ) -> Result<ServerCertVerified, rustls::Error> {
        *self.seen.lock().unwrap() = Some(end_entity.clone().into_owned());
        Ok(ServerCertVerified::assertion())
    }

    fn verify_tls12_signature(
        &self,
        message: &[u8],
        cert: &CertificateDer<'_>,
        dss: &DigitallySignedStruct,
    ) -> Result<HandshakeSignatureValid, rustls::Error> {
        rustls::crypto::verify_tls12_signature(message, cert, dss, &self.algs)
    }

    fn verify_tls13_signature(
        &self,
        message: &[u8],
        cert: &CertificateDer<'_>,
        dss: &DigitallySignedStruct,
    ) -> Result<HandshakeSignatureValid, rustls::Error> {
        rustls::crypto::verify_tls13_signature(message, cert, dss, &self.algs)
    }

    fn supported_verify_schemes(&self) -> Vec<SignatureScheme> {
        self.algs.supported_schemes()
    }
}

pub(crate) enum ServerTrust {
    Observe(Arc<ObservingVerifier>),
    Anchored(Arc<RootCertStore>),
}

pub(crate) fn client_config(
    versions: &[&'static rustls::SupportedProtocolVersion],
    trust: ServerTrust,
    resolver: Arc<RecordingResolver>,
) -> Result<ClientConfig, TlsSetupError> {
    let builder = ClientConfig::builder_with_provider(provider()).with_protocol_versions(versions)?;
    let builder = match trust {
        ServerTrust::Observe(v) => builder.dangerous().with_custom_certificate_verifier(v),
        ServerTrust::Anchored(roots) => {
            let verifier = WebPkiServerVerifier::builder_with_provider(roots, provider())
                .build()
                .map_err(|e| rustls::Error::General(e.to_string()))?;
            builder.with_webpki_verifier(verifier)
        }
    };
    Ok(builder.with_client_cert_resolver(resolver))
}

pub(crate) fn server_name(host: &str) -> Result<ServerName<'static>, String> {
    ServerName::try_from(host.to_string()).map_err(|e| format!("invalid server name {host:?}: {e}"))
}
