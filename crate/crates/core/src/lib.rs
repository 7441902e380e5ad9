//! Training-free dense hand contact estimation with a multimodal LLM.
//!
//! A right-hand mesh is split into named parts, each part's vertices are laid
//! out as rows of a grid, and the model is asked in three steps for a
//! description, the contact parts, and binary grids for those parts.

pub mod eval_harness;
pub mod experiment;
pub mod fixtures;
pub mod grid_builder;
pub mod hand_model;
pub mod mllm_client;
pub mod pipeline;
pub mod prompt_engine;
pub mod view;
pub mod visual_prompt;
