//! Tuple schemas shared by the master and the workers, and the metric
//! labels every case emits.

use tuplespace::{template, tuple, PatternField, Template, Tuple, ValueKind};

pub const LABEL_WRITE_LOCAL: &str = "write::local";
pub const LABEL_WRITE_REMOTE: &str = "write::remote";
pub const LABEL_READ_LOCAL: &str = "read::local";
pub const LABEL_READ_REMOTE: &str = "read::remote";
pub const LABEL_SEARCH: &str = "read::l-r";
pub const LABEL_TOTAL: &str = "Master::TotalRuntime";
pub const LABEL_VISITED: &str = "nodeVisited";

/// Every label a complete run writes to its dumps.
pub const ALL_LABELS: [&str; 7] =
    [LABEL_WRITE_LOCAL, LABEL_READ_LOCAL, LABEL_WRITE_REMOTE, LABEL_READ_REMOTE, LABEL_SEARCH, LABEL_TOTAL, LABEL_VISITED];

pub const STATUS_NOT_PROCESSED: &str = "not_processed";
pub const STATUS_COMPLETE: &str = "complete";

pub fn ready() -> Tuple {
    tuple!["search", "worker", "worker_ready"]
}

pub fn loaded() -> Tuple {
    tuple!["search", "worker", "data_loaded"]
}

pub fn worker_done() -> Tuple {
    tuple!["search", "worker", "worker_done"]
}

pub fn worker_exit() -> Tuple {
    tuple!["search", "worker", "worker_exit"]
}

pub fn shutdown() -> Tuple {
    tuple!["search", "master", "shutdown"]
}

pub fn key(run_key: &str) -> Tuple {
    tuple!["search", "master_key", run_key]
}

pub fn any_key() -> Template {
    template!["search", "master_key", PatternField::Type(ValueKind::Str)]
}

pub fn task(payload: &str, status: &str) -> Tuple {
    tuple!["search_task", payload, status]
}

pub fn any_task() -> Template {
    template!["search_task", PatternField::Type(ValueKind::Str), PatternField::Type(ValueKind::Str)]
}

pub fn hash_set(hash: &str, password: &str) -> Tuple {
    tuple!["hashSet", hash, password]
}

pub fn hash_lookup(hash: &str) -> Template {
    template!["hashSet", hash, PatternField::Any]
}

pub fn found(hash: &str, password: &str) -> Tuple {
    tuple!["foundValue", hash, password]
}

pub fn any_found() -> Template {
    template!["foundValue", PatternField::Type(ValueKind::Str), PatternField::Type(ValueKind::Str)]
}

pub fn unsorted(values: Vec<i64>) -> Tuple {
    tuple!["unsorted", values]
}

pub fn any_unsorted() -> Template {
    template!["unsorted", PatternField::Type(ValueKind::IntArray)]
}

pub fn sorted(values: Vec<i64>) -> Tuple {
    tuple!["sorted", values]
}

pub fn any_sorted() -> Template {
    template!["sorted", PatternField::Type(ValueKind::IntArray)]
}

pub fn sorted_part(run_id: i64, part: i64, parts: i64, values: Vec<i64>) -> Tuple {
    tuple!["sorted_part", run_id, part, parts, values]
}

pub fn any_sorted_part() -> Template {
    let int = || PatternField::Type(ValueKind::Int64);
    template!["sorted_part", int(), int(), int(), PatternField::Type(ValueKind::IntArray)]
}

pub fn sort_complete() -> Tuple {
    tuple!["sort_complete"]
}

pub fn panel(worker: i64, n: i64, width: i64, cells: Vec<f64>) -> Tuple {
    tuple!["panel", worker, n, width, cells]
}

pub fn panel_for(worker: i64) -> Template {
    template!["panel", worker, PatternField::Any, PatternField::Any, PatternField::Any]
}

pub fn border(worker: i64, iteration: i64, side: &str, column: Vec<f64>) -> Tuple {
    tuple!["border", worker, iteration, side, column]
}

pub fn border_of(worker: i64, iteration: i64, side: &str) -> Template {
    template!["border", worker, iteration, side, PatternField::Any]
}

pub fn ocean_sync(iteration: i64, worker: i64) -> Tuple {
    tuple!["ocean_sync", iteration, worker]
}

pub fn any_ocean_sync(iteration: i64) -> Template {
    template!["ocean_sync", iteration, PatternField::Any]
}

pub fn ocean_go(iteration: i64) -> Tuple {
    tuple!["ocean_go", iteration]
}

pub fn result_panel(worker: i64, cells: Vec<f64>) -> Tuple {
    tuple!["result_panel", worker, cells]
}

pub fn any_result_panel() -> Template {
    template!["result_panel", PatternField::Type(ValueKind::Int64), PatternField::Type(ValueKind::FloatArray)]
}

pub fn a_row(i: i64, row: Vec<f64>) -> Tuple {
    tuple!["A_row", i, row]
}

pub fn any_a_row() -> Template {
    template!["A_row", PatternField::Type(ValueKind::Int64), PatternField::Type(ValueKind::FloatArray)]
}

pub fn b_row(j: i64, row: Vec<f64>) -> Tuple {
    tuple!["B_row", j, row]
}

pub fn b_lookup(j: i64) -> Template {
    template!["B_row", j, PatternField::Any]
}

pub fn c_row(i: i64, row: Vec<f64>) -> Tuple {
    tuple!["C_row", i, row]
}

pub fn any_c_row() -> Template {
    template!["C_row", PatternField::Type(ValueKind::Int64), PatternField::Type(ValueKind::FloatArray)]
}
