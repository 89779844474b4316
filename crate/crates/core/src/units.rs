//! Conversions between the logarithmic units used at human-facing boundaries
//! and the linear units used internally.

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn meters_to_km(m: f64) -> f64 {
    m / 1000.0
}

pub fn km_to_meters(km: f64) -> f64 {
    km * 1000.0
}
