use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::config::NotifySettings;
use super::Stage;

/// One failure, as written to the report file or mailed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureNotice {
    pub specimen_id: String,
    pub stage: Stage,
    pub reason: String,
    pub timestamp: String,
}

pub trait Notifier: Send + Sync {
    fn notify(&self, notice: &FailureNotice) -> Result<(), String>;
}

pub fn notifier_for(settings: &NotifySettings) -> Box<dyn Notifier> {
    match settings {
        NotifySettings::File(path) => Box::new(FileNotifier::new(path)),
        NotifySettings::Smtp { server, from, to } => Box::new(SmtpNotifier {
            server: server.clone(),
            from: from.clone(),
            to: to.clone(),
            timeout: Duration::from_secs(10),
        }),
    }
}

/// Appends JSON lines to a report file.
#[derive(Debug, Clone)]
pub struct FileNotifier {
    path: PathBuf,
}

impl FileNotifier {
    pub fn new(path: &Path) -> Self {
        FileNotifier { path: path.to_path_buf() }
    }
}

impl Notifier for FileNotifier {
    fn notify(&self, notice: &FailureNotice) -> Result<(), String> {
        let mut line = serde_json::to_string(notice).map_err(|e| e.to_string())?;
        line.push('\n');
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| format!("{}: {e}", self.path.display()))?;
        f.write_all(line.as_bytes())
            .map_err(|e| format!("{}: {e}", self.path.display()))
    }
}

/// Read every entry of a failure report.
pub fn read_failure_report(path: &Path) -> Result<Vec<FailureNotice>, String> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(format!("{}: {e}", path.display())),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
        .collect()
}

/// Minimal SMTP submission (no TLS, no auth) for a relay on a trusted
/// network.
#[derive(Debug, Clone)]
pub struct SmtpNotifier {
    pub server: String,
    pub from: String,
    pub to: String,
    pub timeout: Duration,
}

impl SmtpNotifier {
    fn message(&self, n: &FailureNotice) -> String {
        let body = format!(
            "Slide processing failed.\r\n\r\nspecimen_id: {}\r\nstage: {}\r\nreason: {}\r\ntimestamp: {}\r\n",
            n.specimen_id,
            n.stage,
            n.reason.replace(['\r', '\n'], " "),
            n.timestamp
        );
        let stuffed: Vec<String> = body
            .split("\r\n")
            .map(|l| if l.starts_with('.') { format!(".{l}") } else { l.to_string() })
            .collect();
        format!(
            "From: {}\r\nTo: {}\r\nSubject: slidepress failure: {} ({})\r\nDate: {}\r\n\r\n{}",
            self.from,
            self.to,
            n.specimen_id.replace(['\r', '\n'], " "),
            n.stage,
            chrono::Utc::now().to_rfc2822(),
            stuffed.join("\r\n")
        )
    }
}

fn expect(reader: &mut impl BufRead, code: u16) -> Result<(), String> {
    loop {
        let mut line = String::new();
        let n = reader.read_line(&mut line).map_err(|e| e.to_string())?;
        if n == 0 {
            return Err("connection closed by server".into());
        }
        let got: u16 = line
            .get(..3)
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| format!("malformed reply {line:?}"))?;
        if got != code {
            return Err(format!("expected {code}, server replied {}", line.trim_end()));
        }
        if line.as_bytes().get(3) != Some(&b'-') {
            return Ok(());
        }
    }
}

impl Notifier for SmtpNotifier {
    fn notify(&self, notice: &FailureNotice) -> Result<(), String> {
        let addr = self
            .server
            .to_socket_addrs()
            .map_err(|e| format!("{}: {e}", self.server))?
            .next()
            .ok_or_else(|| format!("{}: no address", self.server))?;
        let stream = TcpStream::connect_timeout(&addr, self.timeout).map_err(|e| format!("{}: {e}", self.server))?;
        stream.set_read_timeout(Some(self.timeout)).map_err(|e| e.to_string())?;
        stream.set_write_timeout(Some(self.timeout)).map_err(|e| e.to_string())?;
        let mut writer = stream.try_clone().map_err(|e| e.to_string())?;
        let mut reader = BufReader::new(stream);
        let mut send = |cmd: &str| writer.write_all(cmd.as_bytes()).map_err(|e| e.to_string());

        expect(&mut reader, 220)?;
        send("HELO localhost\r\n")?;
        expect(&mut reader, 250)?;
        send(&format!("MAIL FROM:<{}>\r\n", self.from))?;
        expect(&mut reader, 250)?;
        send(&format!("RCPT TO:<{}>\r\n", self.to))?;
        expect(&mut reader, 250)?;
        send("DATA\r\n")?;
        expect(&mut reader, 354)?;
        send(&format!("{}\r\n.\r\n", self.message(notice)))?;
        expect(&mut reader, 250)?;
        send("QUIT\r\n")?;
        let _ = expect(&mut reader, 221);
        Ok(())
    }
}
