//! Canonical JSON: object keys sorted, floats in shortest round-trip form.

use serde::Serialize;

/// Serializes through `serde_json::Value`, whose map type keeps keys sorted.
pub fn canonical<T: Serialize + ?Sized>(value: &T) -> Result<String, serde_json::Error> {
    Ok(serde_json::to_value(value)?.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Unsorted {
        zeta: u8,
        alpha: f64,
    }

    #[test]
    fn keys_come_out_sorted() {
        let s = canonical(&Unsorted { zeta: 1, alpha: 0.1 }).unwrap();
        assert_eq!(s, r#"{"alpha":0.1,"zeta":1}"#);
    }
}
