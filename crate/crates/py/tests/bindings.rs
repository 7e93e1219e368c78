use std::ffi::CString;

use pyo3::prelude::*;
use pyspn::pyspn;

/// Runs the Python smoke script against the module registered in-process.
#[test]
fn smoke_script_passes() {
    pyo3::append_to_inittab!(pyspn);
    Python::initialize();
    let script = concat!(env!("CARGO_MANIFEST_DIR"), "/python/smoke_test.py");
    let code = CString::new(format!(
        "import runpy\nrunpy.run_path({script:?}, run_name='__main__')\nimport sys\nsys.stdout.flush()\n"
    ))
    .unwrap();
    Python::attach(|py| py.run(&code, None, None)).unwrap();
}
