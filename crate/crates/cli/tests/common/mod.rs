#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Output, Stdio};

pub const BIN: &str = env!("CARGO_BIN_EXE_aquasonde");

pub fn canal_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios/lahore-canal.scenario")
}

pub fn aquasonde(args: &[&str]) -> Command {
    let mut c = Command::new(BIN);
    c.args(args).env_remove("AQUASONDE_TOKEN");
    c
}

pub fn run(args: &[&str]) -> Output {
    aquasonde(args).output().expect("spawn aquasonde")
}

pub fn text(out: &Output) -> (String, String) {
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// A child process that printed `listening on <addr>`; killed on drop.
pub struct Listening {
    pub child: Child,
    pub addr: String,
    pub stdout: BufReader<ChildStdout>,
}

impl Listening {
    pub fn start(mut cmd: Command) -> Listening {
        let mut child = cmd
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn aquasonde");
        let mut stdout = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        stdout.read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected first line {line:?}"))
            .to_string();
        Listening { child, addr, stdout }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Listening {
    fn drop(&mut self) {
        self.kill();
    }
}

pub fn serve(log: &Path, token: Option<&str>) -> Listening {
    let mut cmd = aquasonde(&["serve", "--listen", "127.0.0.1:0", "--log", log.to_str().unwrap()]);
    if let Some(t) = token {
        cmd.env("AQUASONDE_TOKEN", t);
    }
    Listening::start(cmd)
}

pub fn simulate_tcp(scenario: &Path, extra: &[&str]) -> Listening {
    let mut args = vec!["simulate", "--scenario", scenario.to_str().unwrap(), "--listen", "127.0.0.1:0"];
    args.extend_from_slice(extra);
    Listening::start(aquasonde(&args))
}

/// Writes a capture config into `dir` and returns its path.
pub fn capture_config(dir: &Path, device: &str, service: Option<&str>, extra: &str) -> PathBuf {
    let mut s = format!(
        "device = {device}\ncalibration = ideal\nstations_file = {}\nstart_time = 2017-06-15T09:00:00Z\ncsv_out = capture.csv\n",
        canal_scenario().display()
    );
    if let Some(url) = service {
        s.push_str(&format!("service_url = {url}\n"));
    }
    s.push_str(extra);
    let path = dir.join("capture.conf");
    std::fs::write(&path, s).unwrap();
    path
}
