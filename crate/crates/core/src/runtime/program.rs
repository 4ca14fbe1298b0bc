use railgate_colang::{Element, Expr, FlowDef, FlowElement, Form};

/// One instruction of a compiled flow. Conditionals become jumps so a flow
/// position is a single index.
#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    UserMatch(Form),
    BotEmit(Form),
    Execute {
        action: String,
        args: Vec<(String, Expr)>,
        result_var: Option<String>,
    },
    Assign {
        var: String,
        expr: Expr,
    },
    /// Continue when the condition holds, otherwise go to `target`.
    JumpUnless {
        cond: Expr,
        target: usize,
    },
    Jump(usize),
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKind {
    /// Starts with `user ...`; runs on every user message.
    InputRail,
    /// Starts with `bot ...`; vets every bot message.
    OutputRail,
    Dialogue,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowProgram {
    pub name: String,
    pub kind: FlowKind,
    pub steps: Vec<Step>,
}

impl FlowProgram {
    pub fn compile(flow: &FlowDef) -> Self {
        let kind = if flow.is_input_rail() {
            FlowKind::InputRail
        } else if flow.is_output_rail() {
            FlowKind::OutputRail
        } else {
            FlowKind::Dialogue
        };
        let mut steps = Vec::new();
        emit(&flow.elements, &mut steps);
        FlowProgram {
            name: flow.name.clone(),
            kind,
            steps,
        }
    }

    pub fn is_rail(&self) -> bool {
        self.kind != FlowKind::Dialogue
    }

    /// Names of every action the flow can execute.
    pub fn actions(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().filter_map(|s| match s {
            Step::Execute { action, .. } => Some(action.as_str()),
            _ => None,
        })
    }

    /// Bot forms the flow can emit.
    pub fn bot_forms(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().filter_map(|s| match s {
            Step::BotEmit(Form::Named(f)) => Some(f.as_str()),
            _ => None,
        })
    }
}

fn emit(elements: &[FlowElement], out: &mut Vec<Step>) {
    for el in elements {
        match &el.kind {
            Element::UserMatch(f) => out.push(Step::UserMatch(f.clone())),
            Element::BotEmit(f) => out.push(Step::BotEmit(f.clone())),
            Element::ExecuteAction {
                action,
                args,
                result_var,
            } => out.push(Step::Execute {
                action: action.clone(),
                args: args.clone(),
                result_var: result_var.clone(),
            }),
            Element::Assign { var, expr } => out.push(Step::Assign {
                var: var.clone(),
                expr: expr.clone(),
            }),
            Element::Stop => out.push(Step::Stop),
            Element::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let branch = out.len();
                out.push(Step::JumpUnless {
                    cond: cond.clone(),
                    target: 0,
                });
                emit(then_branch, out);
                if else_branch.is_empty() {
                    let end = out.len();
                    out[branch] = Step::JumpUnless {
                        cond: cond.clone(),
                        target: end,
                    };
                } else {
                    let skip = out.len();
                    out.push(Step::Jump(0));
                    let else_start = out.len();
                    emit(else_branch, out);
                    let end = out.len();
                    out[branch] = Step::JumpUnless {
                        cond: cond.clone(),
                        target: else_start,
                    };
                    out[skip] = Step::Jump(end);
                }
            }
        }
    }
}
