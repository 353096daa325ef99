//! All I/O surfaces: the native scene document, the best-effort machine-file
//! exporter, the line-delimited tool-server protocol, and report writers.

pub mod machine_file;
pub mod native;
pub mod report;
pub mod server;

pub use machine_file::{export_machine_file, MachineFileError};
pub use native::{
    export_native, export_native_json, import_native, NativeError, NativeSceneDocument,
};
pub use report::{records_to_csv, records_to_jsonl, run_bench, summary_to_csv, BenchOutcome};
pub use server::{serve_tools, ServeStats, SessionRegistry, ToolRequest, ToolResponse};
