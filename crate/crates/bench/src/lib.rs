//! Fixed workloads shared by the criterion benches.

use hypmark::thermo::Caps;
use hypmark::ModelSpec;

/// The default model with a small perturbation, so distortion code paths run.
pub fn perturbed() -> ModelSpec {
    ModelSpec {
        perturbation: 0.05,
        ..ModelSpec::default()
    }
}

/// Caps small enough for sub-second operator iterations.
pub fn small_caps() -> Caps {
    Caps {
        symbol_cap: 8,
        max_return: 5,
        ages: 12,
        ..Caps::default()
    }
}

#[cfg(test)]
mod tests {
    #[test]
    fn workloads_are_valid() {
        assert!(super::perturbed().validate().is_ok());
        assert!(super::small_caps().symbol_cap <= super::Caps::default().symbol_cap);
    }
}
