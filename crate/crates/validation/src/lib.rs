//! Hosts the `acceptance` test target; run it with `cargo test -p folin-validation --test acceptance`.
