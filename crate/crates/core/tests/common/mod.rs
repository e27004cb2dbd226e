pub mod numeric;
pub mod oracles;
