//! Thin async client for the HOMAD HTTP service.

use std::time::Duration;

use homad_core::api::{
    AllocateRequest, AllocateResponse, ErrorBody, EvaluateRequest, EvaluateResponse, Health, JobView, SubmitRequest,
    SummarizeRequest, ValidateResponse,
};
use homad_core::experiment::ConvergenceSummary;
use reqwest::{Response, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("server answered {status}: {message}")]
    Api { status: StatusCode, message: String },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` like `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn check(resp: Response) -> Result<Response> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        Err(ClientError::Api { status, message })
    }

    async fn get_json<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        Ok(Self::check(self.http.get(self.url(path)).send().await?)
            .await?
            .json()
            .await?)
    }

    async fn post_json<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Ok(Self::check(self.http.post(self.url(path)).json(body).send().await?)
            .await?
            .json()
            .await?)
    }

    pub async fn health(&self) -> Result<Health> {
        self.get_json("/health").await
    }

    pub async fn default_spec(&self) -> Result<String> {
        Ok(Self::check(self.http.get(self.url("/v1/spec/default")).send().await?)
            .await?
            .text()
            .await?)
    }

    pub async fn validate_spec(&self, spec: &str) -> Result<ValidateResponse> {
        let resp = self
            .http
            .post(self.url("/v1/spec/validate"))
            .body(spec.to_string())
            .send()
            .await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    pub async fn submit(&self, spec: &str, out_dir: Option<&str>) -> Result<JobView> {
        self.post_json(
            "/v1/experiments",
            &SubmitRequest {
                spec: spec.into(),
                out_dir: out_dir.map(Into::into),
            },
        )
        .await
    }

    pub async fn job(&self, id: u64) -> Result<JobView> {
        self.get_json(&format!("/v1/experiments/{id}")).await
    }

    pub async fn jobs(&self) -> Result<Vec<JobView>> {
        self.get_json("/v1/experiments").await
    }

    /// Polls until the job completes or fails, reporting each new state.
    pub async fn wait(&self, id: u64, poll: Duration, mut on_update: impl FnMut(&JobView)) -> Result<JobView> {
        let mut last = None;
        loop {
            let job = self.job(id).await?;
            if last != Some((job.state, job.done)) {
                on_update(&job);
                last = Some((job.state, job.done));
            }
            if job.state.is_finished() {
                return Ok(job);
            }
            tokio::time::sleep(poll).await;
        }
    }

    pub async fn results_csv(&self, id: u64) -> Result<String> {
        let resp = self
            .http
            .get(self.url(&format!("/v1/experiments/{id}/results.csv")))
            .send()
            .await?;
        Ok(Self::check(resp).await?.text().await?)
    }

    pub async fn summarize(&self, dir: &str) -> Result<Vec<ConvergenceSummary>> {
        self.post_json("/v1/summarize", &SummarizeRequest { dir: dir.into() })
            .await
    }

    pub async fn allocate(&self, req: &AllocateRequest) -> Result<AllocateResponse> {
        self.post_json("/v1/allocate", req).await
    }

    pub async fn evaluate(&self, req: &EvaluateRequest) -> Result<EvaluateResponse> {
        self.post_json("/v1/evaluate", req).await
    }
}
