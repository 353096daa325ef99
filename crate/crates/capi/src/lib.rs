//! C ABI for the construction engine.
//!
//! Sessions are opaque handles created by `mb_session_new` (embedded catalog)
//! or `mb_session_new_with_catalog`, driven by `mb_apply_json` with the same
//! JSON action envelope the tool server speaks, and inspected through the
//! query helpers. Every function returns a `MbStatus`; string outputs are
//! heap-allocated, NUL-terminated UTF-8 owned by the caller and released with
//! `mb_string_free`.
//!
//! The generated header lives at `include/mechabench.h`.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use mechabench::actions::{Action, EngineSession};
use mechabench::catalog::{load_full_catalog, Catalog, DEFAULT_CATALOG_TOML};
use mechabench::config::EngineConfig;
use mechabench::describe;
use mechabench::interface::{export_machine_file, export_native_json};
use mechabench::scene::Phase;

/// Status codes returned by every FFI entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Input could not be parsed (catalog, action JSON).
    ParseError = 3,
    /// The action was dispatched and rejected; the response JSON carries the
    /// taxonomized error.
    ActionRejected = 4,
    /// No active scene for the requested operation.
    NoScene = 5,
    /// Export or internal engine failure.
    EngineError = 6,
    /// A panic was caught at the FFI boundary.
    Panic = 7,
}

/// Opaque construction session handle.
pub struct MbSession {
    inner: EngineSession,
}

fn alloc_string(s: String) -> *mut c_char {
    CString::new(s.into_bytes())
        .unwrap_or_else(|_| CString::new("invalid interior NUL").expect("static"))
        .into_raw()
}

unsafe fn write_out(out: *mut *mut c_char, s: String) -> MbStatus {
    if out.is_null() {
        return MbStatus::NullPointer;
    }
    unsafe { *out = alloc_string(s) };
    MbStatus::Ok
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, MbStatus> {
    if ptr.is_null() {
        return Err(MbStatus::NullPointer);
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| MbStatus::InvalidUtf8)
}

fn guard<F: FnOnce() -> MbStatus>(f: F) -> MbStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(MbStatus::Panic)
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn mb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Create a session over the embedded default catalog.
#[no_mangle]
pub extern "C" fn mb_session_new() -> *mut MbSession {
    let catalog = match load_full_catalog(DEFAULT_CATALOG_TOML) {
        Ok(c) => Arc::new(c),
        Err(_) => return std::ptr::null_mut(),
    };
    Box::into_raw(Box::new(MbSession {
        inner: EngineSession::new(catalog, EngineConfig::default()),
    }))
}

/// Create a session from a catalog document.
///
/// # Safety
/// `catalog_toml` must be a valid NUL-terminated string and `out_session` a
/// valid pointer; the returned session must be freed with `mb_session_free`.
#[no_mangle]
pub unsafe extern "C" fn mb_session_new_with_catalog(
    catalog_toml: *const c_char,
    out_session: *mut *mut MbSession,
) -> MbStatus {
    guard(|| {
        if out_session.is_null() {
            return MbStatus::NullPointer;
        }
        let document = match unsafe { read_str(catalog_toml) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        let catalog: Arc<Catalog> = match load_full_catalog(document) {
            Ok(c) => Arc::new(c),
            Err(_) => return MbStatus::ParseError,
        };
        let session = Box::new(MbSession {
            inner: EngineSession::new(catalog, EngineConfig::default()),
        });
        unsafe { *out_session = Box::into_raw(session) };
        MbStatus::Ok
    })
}

/// Destroy a session. NULL is ignored.
///
/// # Safety
/// `session` must be NULL or a pointer returned by a session constructor, not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn mb_session_free(session: *mut MbSession) {
    if !session.is_null() {
        drop(unsafe { Box::from_raw(session) });
    }
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a pointer produced by a `mb_*` out-parameter, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn mb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Apply one action given as the JSON envelope
/// `{"name": ..., "arguments": {...}, "note": ...}` and return the full
/// ActionResult as JSON in `out_response_json` (set on both accepted and
/// rejected actions).
///
/// # Safety
/// `session`, `action_json`, and `out_response_json` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mb_apply_json(
    session: *mut MbSession,
    action_json: *const c_char,
    out_response_json: *mut *mut c_char,
) -> MbStatus {
    guard(|| {
        if session.is_null() {
            return MbStatus::NullPointer;
        }
        let action_str = match unsafe { read_str(action_json) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        let action: Action = match serde_json::from_str(action_str) {
            Ok(a) => a,
            Err(_) => return MbStatus::ParseError,
        };
        let session = unsafe { &mut *session };
        let result = session.inner.apply(&action);
        let ok = result.ok;
        let encoded = match serde_json::to_string(&result) {
            Ok(s) => s,
            Err(_) => return MbStatus::EngineError,
        };
        let status = unsafe { write_out(out_response_json, encoded) };
        if status != MbStatus::Ok {
            return status;
        }
        if ok {
            MbStatus::Ok
        } else {
            MbStatus::ActionRejected
        }
    })
}

/// Machine summary prose for the live scene.
///
/// # Safety
/// `session` and `out_text` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mb_machine_summary(
    session: *mut MbSession,
    out_text: *mut *mut c_char,
) -> MbStatus {
    guard(|| {
        if session.is_null() {
            return MbStatus::NullPointer;
        }
        let session = unsafe { &*session };
        let Some(scene) = session.inner.scene.as_ref() else {
            return MbStatus::NoScene;
        };
        let text = describe::machine_summary(&session.inner.catalog, &session.inner.config, scene);
        unsafe { write_out(out_text, text) }
    })
}

/// Deterministic digest of the live scene.
///
/// # Safety
/// `session` and `out_hash` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mb_state_hash(
    session: *mut MbSession,
    out_hash: *mut *mut c_char,
) -> MbStatus {
    guard(|| {
        if session.is_null() {
            return MbStatus::NullPointer;
        }
        let session = unsafe { &*session };
        match session.inner.scene_hash() {
            Some(hash) => unsafe { write_out(out_hash, hash) },
            None => MbStatus::NoScene,
        }
    })
}

/// Export the live scene plus trajectory log as the native JSON document.
///
/// # Safety
/// `session` and `out_json` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mb_export_native(
    session: *mut MbSession,
    out_json: *mut *mut c_char,
) -> MbStatus {
    guard(|| {
        if session.is_null() {
            return MbStatus::NullPointer;
        }
        let session = unsafe { &*session };
        if session.inner.scene.is_none() {
            return MbStatus::NoScene;
        }
        match export_native_json(&session.inner) {
            Ok(json) => unsafe { write_out(out_json, json) },
            Err(_) => MbStatus::EngineError,
        }
    })
}

/// Export the live scene as the machine-file markup document. The scene must
/// be finalized.
///
/// # Safety
/// `session`, `name`, and `out_xml` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mb_export_machine_file(
    session: *mut MbSession,
    name: *const c_char,
    out_xml: *mut *mut c_char,
) -> MbStatus {
    guard(|| {
        if session.is_null() {
            return MbStatus::NullPointer;
        }
        let machine_name = match unsafe { read_str(name) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        let session = unsafe { &*session };
        let Some(scene) = session.inner.scene.as_ref() else {
            return MbStatus::NoScene;
        };
        if scene.phase != Phase::Finalized {
            return MbStatus::EngineError;
        }
        match export_machine_file(scene, machine_name) {
            Ok(xml) => unsafe { write_out(out_xml, xml) },
            Err(_) => MbStatus::EngineError,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn session_lifecycle_and_apply() {
        let session = mb_session_new();
        assert!(!session.is_null());
        unsafe {
            let mut response: *mut c_char = std::ptr::null_mut();
            let action = cstr(r#"{"name": "start", "arguments": {}}"#);
            let status = mb_apply_json(session, action.as_ptr(), &mut response);
            assert_eq!(status, MbStatus::Ok);
            let text = CStr::from_ptr(response).to_str().unwrap().to_string();
            assert!(text.contains("\"ok\":true"));
            mb_string_free(response);

            let mut hash: *mut c_char = std::ptr::null_mut();
            assert_eq!(mb_state_hash(session, &mut hash), MbStatus::Ok);
            assert_eq!(CStr::from_ptr(hash).to_str().unwrap().len(), 64);
            mb_string_free(hash);

            let mut summary: *mut c_char = std::ptr::null_mut();
            assert_eq!(mb_machine_summary(session, &mut summary), MbStatus::Ok);
            assert!(CStr::from_ptr(summary)
                .to_str()
                .unwrap()
                .contains("1 block(s)"));
            mb_string_free(summary);

            mb_session_free(session);
        }
    }

    #[test]
    fn rejected_action_reports_status_and_payload() {
        let session = mb_session_new();
        unsafe {
            let mut response: *mut c_char = std::ptr::null_mut();
            let action = cstr(r#"{"name": "get_machine_summary"}"#);
            let status = mb_apply_json(session, action.as_ptr(), &mut response);
            assert_eq!(status, MbStatus::ActionRejected);
            let text = CStr::from_ptr(response).to_str().unwrap();
            assert!(text.contains("PhaseViolation"));
            mb_string_free(response);
            mb_session_free(session);
        }
    }

    #[test]
    fn null_and_garbage_inputs() {
        unsafe {
            let mut out: *mut c_char = std::ptr::null_mut();
            assert_eq!(
                mb_apply_json(std::ptr::null_mut(), std::ptr::null(), &mut out),
                MbStatus::NullPointer
            );
            let session = mb_session_new();
            assert_eq!(
                mb_apply_json(session, std::ptr::null(), &mut out),
                MbStatus::NullPointer
            );
            let garbage = cstr("not json at all");
            assert_eq!(
                mb_apply_json(session, garbage.as_ptr(), &mut out),
                MbStatus::ParseError
            );
            assert_eq!(mb_state_hash(session, &mut out), MbStatus::NoScene);
            mb_session_free(session);
            mb_session_free(std::ptr::null_mut());
            mb_string_free(std::ptr::null_mut());
        }
    }

    #[test]
    fn machine_file_requires_finalized() {
        let session = mb_session_new();
        unsafe {
            let mut response: *mut c_char = std::ptr::null_mut();
            let start = cstr(r#"{"name": "start"}"#);
            mb_apply_json(session, start.as_ptr(), &mut response);
            mb_string_free(response);

            let name = cstr("test");
            let mut xml: *mut c_char = std::ptr::null_mut();
            assert_eq!(
                mb_export_machine_file(session, name.as_ptr(), &mut xml),
                MbStatus::EngineError
            );

            let mut response: *mut c_char = std::ptr::null_mut();
            let finalize = cstr(r#"{"name": "finalize"}"#);
            assert_eq!(
                mb_apply_json(session, finalize.as_ptr(), &mut response),
                MbStatus::Ok
            );
            mb_string_free(response);
            assert_eq!(
                mb_export_machine_file(session, name.as_ptr(), &mut xml),
                MbStatus::Ok
            );
            assert!(CStr::from_ptr(xml).to_str().unwrap().contains("<Machine"));
            mb_string_free(xml);
            mb_session_free(session);
        }
    }
}
