//! Coordinator side of the protocol: one request in, one reply out.

use dataforge_core::orchestrator::{Ack, Coordinator};

use crate::protocol::Message;

fn error(worker_id: Option<String>, job_id: Option<String>, message: impl ToString) -> Message {
    Message::Error {
        worker_id,
        job_id,
        message: message.to_string(),
    }
}

/// Applies a worker request to the coordinator at logical time `now`.
pub fn handle(coord: &mut Coordinator, msg: Message, now: u64) -> Message {
    match msg {
        Message::Register {
            worker_id,
            capabilities,
        } => {
            coord.register(&worker_id, capabilities.iter().copied().collect(), now);
            Message::Register {
                worker_id,
                capabilities,
            }
        }
        Message::Heartbeat { worker_id } => match coord.heartbeat(&worker_id, now) {
            Ok(()) => Message::Heartbeat { worker_id },
            Err(e) => error(Some(worker_id), None, e),
        },
        Message::AssignRequest { worker_id } => {
            if let Err(e) = coord.heartbeat(&worker_id, now) {
                return error(Some(worker_id), None, e);
            }
            if coord.is_drained() {
                return Message::Shutdown;
            }
            match coord.assign(&worker_id, now) {
                Ok(job) => Message::Assign { job },
                Err(e) => error(Some(worker_id), None, e),
            }
        }
        Message::Result {
            worker_id,
            job_id,
            payload_ref,
            kept,
            ..
        } => match coord.record_result(&job_id, Some(&worker_id), &payload_ref, kept, now) {
            Ok(ack) => Message::Result {
                worker_id,
                job_id,
                payload_ref,
                kept,
                discarded: ack == Ack::Discarded,
            },
            Err(e) => error(Some(worker_id), Some(job_id), e),
        },
        Message::Error {
            worker_id: Some(worker_id),
            job_id: Some(job_id),
            message,
        } => match coord.report_error(&job_id, &worker_id, &message, now) {
            Ok(_) => Message::Error {
                worker_id: Some(worker_id),
                job_id: Some(job_id),
                message,
            },
            Err(e) => error(Some(worker_id), Some(job_id), e),
        },
        other => error(None, None, format!("unexpected request {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dataforge_core::orchestrator::{CoordinatorConfig, Stage};

    #[test]
    fn request_reply_cycle() {
        let mut c = Coordinator::new(CoordinatorConfig {
            follow_dag: false,
            ..CoordinatorConfig::default()
        });
        c.enqueue(Stage::Vad, "x", vec![], 0).unwrap();
        let reg = Message::Register {
            worker_id: "w".into(),
            capabilities: vec![Stage::Vad],
        };
        assert_eq!(handle(&mut c, reg.clone(), 0), reg);
        let Message::Assign { job: Some(job) } = handle(&mut c, Message::AssignRequest { worker_id: "w".into() }, 1)
        else {
            panic!("expected a job");
        };
        let result = Message::Result {
            worker_id: "w".into(),
            job_id: job.job_id.clone(),
            payload_ref: "p".into(),
            kept: None,
            discarded: false,
        };
        assert_eq!(handle(&mut c, result.clone(), 2), result);
        let Message::Result { discarded, .. } = handle(&mut c, result, 3) else {
            panic!("expected an ack");
        };
        assert!(discarded);
        assert_eq!(
            handle(&mut c, Message::AssignRequest { worker_id: "w".into() }, 4),
            Message::Shutdown
        );
        assert!(matches!(
            handle(
                &mut c,
                Message::Heartbeat {
                    worker_id: "ghost".into()
                },
                5
            ),
            Message::Error { .. }
        ));
        assert!(matches!(handle(&mut c, Message::Shutdown, 5), Message::Error { .. }));
    }
}
