//! Blocking HTTP client for the ingestion service.

use std::time::Duration;

use anyhow::{anyhow, Context};
use aquasonde_core::{Reading, StationSummary};
use aquasonde_service::{IngestResponse, Source};
use reqwest::blocking;
use reqwest::StatusCode;

pub struct Client {
    base: String,
    token: Option<String>,
    http: blocking::Client,
}

impl Client {
    pub fn new(base: &str, token: Option<String>) -> anyhow::Result<Client> {
        let base = base.trim_end_matches('/').to_string();
        if !(base.starts_with("http://") || base.starts_with("https://")) {
            return Err(crate::usage(format!("service URL must start with http:// or https://, got {base}")));
        }
        let http = blocking::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()?;
        Ok(Client { base, token, http })
    }

    fn get(&self, path: &str) -> anyhow::Result<blocking::Response> {
        let url = format!("{}{path}", self.base);
        let resp = self
            .http
            .get(&url)
            .send()
            .with_context(|| format!("GET {url}"))?;
        Ok(resp)
    }

    fn ok(resp: blocking::Response) -> anyhow::Result<blocking::Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body = resp.text().unwrap_or_default();
        Err(anyhow!("service returned {status}: {}", body.trim()))
    }

    pub fn post_readings(&self, readings: &[Reading], source: Source) -> anyhow::Result<IngestResponse> {
        let src = match source {
            Source::Live => "live",
            Source::Replay => "replay",
        };
        let url = format!("{}/v1/readings?source={src}", self.base);
        let mut req = self.http.post(&url).json(readings);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().with_context(|| format!("POST {url}"))?;
        if resp.status() == StatusCode::UNAUTHORIZED {
            return Err(anyhow!("service rejected the token (set {})", aquasonde_service::TOKEN_ENV));
        }
        Ok(Self::ok(resp)?.json()?)
    }

    pub fn stations(&self) -> anyhow::Result<Vec<StationSummary>> {
        Ok(Self::ok(self.get("/v1/stations")?)?.json()?)
    }

    pub fn station_readings(&self, label: &str) -> anyhow::Result<Vec<Reading>> {
        let mut url = reqwest::Url::parse(&self.base)?;
        url.path_segments_mut()
            .map_err(|_| anyhow!("service URL cannot be a base"))?
            .extend(["v1", "stations", label, "readings"]);
        let resp = self.http.get(url.clone()).send().with_context(|| format!("GET {url}"))?;
        Ok(Self::ok(resp)?.json()?)
    }

    /// Every stored reading, station by station.
    pub fn all_readings(&self) -> anyhow::Result<Vec<Reading>> {
        let mut out = Vec::new();
        for s in self.stations()? {
            out.extend(self.station_readings(&s.station)?);
        }
        Ok(out)
    }

    pub fn export_csv(&self, with_provenance: bool) -> anyhow::Result<String> {
        let path = if with_provenance {
            "/v1/export.csv?with_provenance=true"
        } else {
            "/v1/export.csv"
        };
        Ok(Self::ok(self.get(path)?)?.text()?)
    }
}
