use thiserror::Error;

use crate::compressor::CompressError;
use crate::evaluator::MetricError;
use crate::fixtures::FixtureError;
use crate::generator::GenError;
use crate::graph::GraphError;
use crate::proposer::ProposeError;
use crate::table::TableError;
use crate::validator::ValidateError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Propose(#[from] ProposeError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error(transparent)]
    Generate(#[from] GenError),
    #[error(transparent)]
    Evaluate(#[from] MetricError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
}
