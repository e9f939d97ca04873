mod ast;
mod ground;
mod parse;
mod pretty;
mod typeck;

pub use ast::{type_of_ground, BinOp, GroundValue, Labeled, Lit, Term, Type};
pub use ground::{decode_ground, decode_prefix, encode_ground, DecodeError};
pub use parse::{parse_ground, parse_input, parse_term, parse_type, ParseError};
pub use pretty::{print_term, print_type};
pub use typeck::{check_type, type_of, TypeError};
