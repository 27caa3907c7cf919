//! The simulated oracle and user.

mod oracle;
mod user;

pub use oracle::{answer_oracle, answer_oracle_noisy, AnswerContent, OracleAnswer, OracleQuery, Polarity};
pub(crate) use oracle::{slot_count, template_edge};
pub use user::{answer_user, user_act, UserPolicy, UserProfile};
