//! Fixed panels shared by the benchmarks.

use hdfts::simgen::{generate, DesignKind, SimDesign};
use hdfts::CurvePanel;

/// One draw of Example 1 with `n` observations.
pub fn example_panel(n: usize) -> CurvePanel {
    let design = SimDesign { kind: DesignKind::Example1, n, ..SimDesign::default() };
    generate(&design, 1).expect("valid design").0
}

/// One draw of the large-`p` design.
pub fn large_p_panel(p: usize, n: usize) -> CurvePanel {
    let design = SimDesign { kind: DesignKind::LargeP, p, n, ..SimDesign::default() };
    generate(&design, 1).expect("valid design").0
}
