use std::net::Ipv4Addr;
use std::time::Duration;

use tokio::net::TcpStream;
use utmsec_testbed::{
    free_port_base, request_shutdown, Profile, Testbed, TestbedConfig, TestbedError, Toggle, PORT_SPAN,
};

async fn reachable(port: u16) -> bool {
    matches!(
        tokio::time::timeout(Duration::from_secs(1), TcpStream::connect((Ipv4Addr::LOCALHOST, port))).await,
        Ok(Ok(_))
    )
}

fn ports(base: u16) -> impl Iterator<Item = u16> {
    base..base + PORT_SPAN
}

#[tokio::test]
async fn start_stop_restart() {
    let dir = tempfile::tempdir().unwrap();
    let base = free_port_base().unwrap();
    let mut tb = Testbed::start(TestbedConfig::new(base, dir.path())).await.unwrap();

    let on_disk = utmsec_manifest::load_manifest(tb.manifest_path()).unwrap();
    assert_eq!(&on_disk, tb.manifest());
    assert_eq!(on_disk.components.len(), 7);
    // The control port is the only one a stranger can connect to and keep.
    assert!(reachable(base + PORT_SPAN - 1).await);
    assert!(reachable(base).await);

    tb.stop().await;
    tb.stop().await;
    for p in ports(base) {
        assert!(!reachable(p).await, "port {p} still open after stop");
    }

    let mut again = Testbed::start(TestbedConfig::new(base, dir.path()).with_profile(Profile::PaperPoc))
        .await
        .expect("ports free for immediate restart");
    assert!(again.toggles().contains(&Toggle::PlaintextDbnode));
    again.stop().await;
}

#[tokio::test]
async fn occupied_port_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let base = free_port_base().unwrap();
    let _squatter = std::net::TcpListener::bind((Ipv4Addr::LOCALHOST, base + 3)).unwrap();
    match Testbed::start(TestbedConfig::new(base, dir.path())).await {
        Err(TestbedError::PortConflict { port, .. }) => assert_eq!(port, base + 3),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("started on an occupied port"),
    }
    assert!(!reachable(base).await, "earlier ports released after the failure");
}

#[test]
fn unknown_toggle_rejected_before_binding() {
    let err = TestbedConfig::new(1, "unused").with_toggle_list("long-expiry, foo").unwrap_err();
    assert_eq!(err.0, "foo");
    assert!(TestbedConfig::new(1, "unused").with_toggle_list(" ,").unwrap().toggles.is_empty());
}

#[tokio::test]
async fn control_port_shutdown() {
    let dir = tempfile::tempdir().unwrap();
    let base = free_port_base().unwrap();
    let mut tb = Testbed::start(TestbedConfig::new(base, dir.path())).await.unwrap();
    let waiter = async {
        tb.shutdown_requested().await;
    };
    let (_, sent) = tokio::join!(waiter, request_shutdown(base));
    sent.unwrap();
    tb.stop().await;
    assert!(request_shutdown(base).await.is_err());
}
