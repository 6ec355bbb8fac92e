// Every example under examples/ runs as part of the test suite.

macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $module() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example!(linear_assignment, "linear_assignment.rs");
example!(autoregressive_prior, "autoregressive_prior.rs");
example!(permutation_matching, "permutation_matching.rs");
example!(scene_graphs, "scene_graphs.rs");
example!(message_passing, "message_passing.rs");
example!(gradient_check, "gradient_check.rs");
example!(constrained_training, "constrained_training.rs");
example!(layout_synthesis, "layout_synthesis.rs");
example!(recommendation, "recommendation.rs");
example!(scene_editing, "scene_editing.rs");
example!(evaluation_metrics, "evaluation_metrics.rs");
