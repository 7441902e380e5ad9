use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClientError, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRate {
    pub usd_per_1m_output_tokens: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usd_per_1m_input_tokens: Option<f64>,
}

/// Per-model USD rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PricingTable {
    pub models: BTreeMap<String, ModelRate>,
}

impl Default for PricingTable {
    fn default() -> Self {
        let mut models = BTreeMap::new();
        models.insert("gpt-5.5".to_string(), ModelRate { usd_per_1m_output_tokens: 30.0, usd_per_1m_input_tokens: None });
        models.insert("gpt-5.4".to_string(), ModelRate { usd_per_1m_output_tokens: 15.0, usd_per_1m_input_tokens: None });
        Self { models }
    }
}

impl PricingTable {
    pub fn validate(&self) -> Result<(), ClientError> {
        for (model, rate) in &self.models {
            let ok = |r: f64| r.is_finite() && r >= 0.0;
            if !ok(rate.usd_per_1m_output_tokens) || !rate.usd_per_1m_input_tokens.is_none_or(ok) {
                return Err(ClientError::Config(format!("rates for {model:?} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    pub fn rate(&self, model: &str) -> Result<&ModelRate, ClientError> {
        self.models.get(model).ok_or_else(|| ClientError::UnknownModel(model.to_string()))
    }
}

/// Output-token cost in USD. Input tokens are not included.
pub fn compute_cost(usage: Usage, model: &str, pricing: &PricingTable) -> Result<f64, ClientError> {
    let rate = pricing.rate(model)?;
    Ok(usage.output_tokens as f64 * rate.usd_per_1m_output_tokens / 1e6)
}

/// Input-token cost in USD, zero when the model has no input rate.
pub fn compute_input_cost(usage: Usage, model: &str, pricing: &PricingTable) -> Result<f64, ClientError> {
    let rate = pricing.rate(model)?;
    Ok(usage.input_tokens as f64 * rate.usd_per_1m_input_tokens.unwrap_or(0.0) / 1e6)
}

/// `$0.108` style, three decimals.
pub fn format_usd(amount: f64) -> String {
    format!("${amount:.3}")
}
